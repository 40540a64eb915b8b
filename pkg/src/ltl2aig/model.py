"""Hierarchical Transformer: local per-property encoder layers, global
encoder layers over all properties, and a standard autoregressive decoder
that emits circuit token sequences."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .specs import RealizabilityStatus
from .tokenizer import EncodedSpec, TokenizeError, Vocabulary

NEG_INF = -1e9


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 256
    d_ff: int = 1024
    local_layers: int = 4
    global_layers: int = 4
    decoder_layers: int = 8
    heads: int = 4
    max_props: int = 12
    prop_length: int = 32
    max_target_length: int = 128
    dropout: float = 0.1
    tree_depth: int = 32

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ModelError("d_model must be divisible by the head count")
        for name in ("vocab_size", "d_model", "d_ff", "heads", "max_props",
                     "prop_length", "max_target_length", "tree_depth"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be at least 1")
        if self.local_layers < 0 or self.global_layers < 0 \
                or self.decoder_layers < 1:
            raise ModelError("layer counts out of range")


@dataclass(frozen=True)
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    warmup_steps: int = 4000
    batch_size: int = 256
    train_steps: int = 30000
    eval_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ModelError("Adam betas must lie in (0, 1)")
        if self.warmup_steps < 1:
            raise ModelError("warmup_steps must be at least 1")


def learning_rate(step: int, d_model: int, warmup_steps: int) -> float:
    """lr(step) = d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)."""
    if step < 1:
        raise ModelError("schedule is defined for steps >= 1")
    return d_model ** -0.5 * min(step ** -0.5,
                                 step * warmup_steps ** -1.5)


def sinusoidal_positions(length: int, d_model: int,
                         dtype=torch.float32) -> torch.Tensor:
    position = torch.arange(length, dtype=dtype).unsqueeze(1)
    div = torch.exp(torch.arange(0, d_model, 2, dtype=dtype)
                    * (-math.log(10000.0) / d_model))
    out = torch.zeros(length, d_model, dtype=dtype)
    out[:, 0::2] = torch.sin(position * div)
    out[:, 1::2] = torch.cos(position * div[: (d_model + 1) // 2])
    return out


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = d_model // heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, query, keyval, mask=None):
        # mask: broadcastable to (B, heads, Tq, Tk); True = may attend
        b, tq, d = query.shape
        tk = keyval.shape[1]
        q = self.q_proj(query).view(b, tq, self.heads, self.head_dim)
        k = self.k_proj(keyval).view(b, tk, self.heads, self.head_dim)
        v = self.v_proj(keyval).view(b, tk, self.heads, self.head_dim)
        scores = torch.einsum("bqhd,bkhd->bhqk", q, k) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores.masked_fill(~mask, NEG_INF)
        weights = self.dropout(torch.softmax(scores, dim=-1))
        mixed = torch.einsum("bhqk,bkhd->bqhd", weights, v)
        return self.out_proj(mixed.reshape(b, tq, d))


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(d_model, d_ff), nn.ReLU(), nn.Dropout(dropout),
            nn.Linear(d_ff, d_model))

    def forward(self, x):
        return self.net(x)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, key_mask):
        # key_mask: (B, Tk) True where attendable
        mask = key_mask[:, None, None, :] if key_mask is not None else None
        x = self.norm1(x + self.dropout(self.attn(x, x, mask)))
        return self.norm2(x + self.dropout(self.ffn(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads, cfg.dropout)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.heads, cfg.dropout)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, y, memory, causal_mask, memory_mask):
        y = self.norm1(y + self.dropout(self.self_attn(y, y, causal_mask)))
        mem = memory_mask[:, None, None, :] if memory_mask is not None else None
        y = self.norm2(y + self.dropout(self.cross_attn(y, memory, mem)))
        return self.norm3(y + self.dropout(self.ffn(y)))


class HierTransformer(nn.Module):
    """Encoder runs each property through the local stack in isolation,
    then the concatenation through the global stack; tree-position vectors
    enter through a learned linear map added to token embeddings."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.tree_proj = nn.Linear(2 * cfg.tree_depth, cfg.d_model, bias=False)
        self.local_stack = nn.ModuleList(
            EncoderLayer(cfg) for _ in range(cfg.local_layers))
        self.global_stack = nn.ModuleList(
            EncoderLayer(cfg) for _ in range(cfg.global_layers))
        self.decoder_stack = nn.ModuleList(
            DecoderLayer(cfg) for _ in range(cfg.decoder_layers))
        self.out_proj = nn.Linear(cfg.d_model, cfg.vocab_size)
        self.dropout = nn.Dropout(cfg.dropout)
        self.register_buffer(
            "target_positions",
            sinusoidal_positions(cfg.max_target_length, cfg.d_model),
            persistent=False)

    def encode_local(self, tokens, positions, mask):
        """(B, P, T) tokens -> (B, P, T, d); each property is processed by
        the local stack on its own, so other properties cannot influence
        its representation."""
        b, p, t = tokens.shape
        scale = math.sqrt(self.cfg.d_model)
        outs = []
        for k in range(p):
            x = self.embed(tokens[:, k]) * scale
            x = x + self.tree_proj(positions[:, k].to(x.dtype))
            x = self.dropout(x)
            key_mask = mask[:, k]
            for layer in self.local_stack:
                x = layer(x, key_mask)
            outs.append(x)
        return torch.stack(outs, dim=1)

    def encode(self, tokens, positions, mask):
        """-> (memory (B, P*T, d), memory mask (B, P*T))."""
        b, p, t = tokens.shape
        x = self.encode_local(tokens, positions, mask)
        flat = x.view(b, p * t, self.cfg.d_model)
        flat_mask = mask.view(b, p * t)
        for layer in self.global_stack:
            flat = layer(flat, flat_mask)
        return flat, flat_mask

    def decode(self, memory, memory_mask, target_in):
        b, s = target_in.shape
        if s > self.cfg.max_target_length:
            raise ModelError("target longer than max_target_length")
        y = self.embed(target_in) * math.sqrt(self.cfg.d_model)
        y = y + self.target_positions[:s].to(y.dtype)
        y = self.dropout(y)
        causal = torch.tril(torch.ones(s, s, dtype=torch.bool,
                                       device=target_in.device))
        causal = causal[None, None, :, :]
        for layer in self.decoder_stack:
            y = layer(y, memory, causal, memory_mask)
        return self.out_proj(y)

    def forward(self, tokens, positions, mask, target_in):
        memory, memory_mask = self.encode(tokens, positions, mask)
        return self.decode(memory, memory_mask, target_in)


# ---------------------------------------------------------------------------
# Batching

@dataclass
class Batch:
    tokens: torch.Tensor      # (B, P, T) int64
    positions: torch.Tensor   # (B, P, T, 2*depth) int8
    mask: torch.Tensor        # (B, P, T) bool
    target_in: torch.Tensor   # (B, S) int64: START + target[:-1]
    labels: torch.Tensor      # (B, S) int64, PAD outside the target


def encode_batch(encoded: Sequence[tuple[EncodedSpec, Sequence[int]]],
                 cfg: ModelConfig, vocab: Vocabulary) -> Batch:
    """Tensorize (encoded spec, target token ids) pairs, padding property
    slots and targets to the model shapes."""
    from . import tokenizer as tok
    b = len(encoded)
    t = cfg.prop_length
    width = 2 * cfg.tree_depth
    tokens = torch.zeros(b, cfg.max_props, t, dtype=torch.int64)
    positions = torch.zeros(b, cfg.max_props, t, width, dtype=torch.int8)
    mask = torch.zeros(b, cfg.max_props, t, dtype=torch.bool)
    target_in = torch.full((b, cfg.max_target_length), vocab.pad_id,
                           dtype=torch.int64)
    labels = torch.full((b, cfg.max_target_length), vocab.pad_id,
                        dtype=torch.int64)
    start_id = vocab.id(tok.START)
    for i, (spec, target) in enumerate(encoded):
        if len(spec.properties) > cfg.max_props:
            raise ModelError(
                f"{len(spec.properties)} properties exceed max_props")
        if spec.prop_length != t or spec.max_depth != cfg.tree_depth:
            raise ModelError("specification encoded with different shapes")
        if len(target) + 1 > cfg.max_target_length:
            raise ModelError("target exceeds max_target_length")
        for p, prop in enumerate(spec.properties):
            tokens[i, p] = torch.tensor(prop.token_ids, dtype=torch.int64)
            positions[i, p] = torch.tensor(prop.positions, dtype=torch.int8)
            mask[i, p, :prop.length] = True
        target_in[i, 0] = start_id
        if len(target) > 1:
            target_in[i, 1:len(target)] = torch.tensor(list(target[:-1]),
                                                       dtype=torch.int64)
        labels[i, :len(target)] = torch.tensor(list(target), dtype=torch.int64)
    return Batch(tokens, positions, mask, target_in, labels)


def batch_rows(batch: Batch, idx) -> Batch:
    return Batch(batch.tokens[idx], batch.positions[idx], batch.mask[idx],
                 batch.target_in[idx], batch.labels[idx])


def sequence_metrics(logits: torch.Tensor, labels: torch.Tensor,
                     pad_id: int) -> tuple[torch.Tensor, float]:
    """(cross-entropy loss, accuracy-per-sequence): a sequence counts as
    correct when every non-pad target token is predicted correctly."""
    vocab = logits.shape[-1]
    loss = F.cross_entropy(logits.reshape(-1, vocab), labels.reshape(-1),
                           ignore_index=pad_id)
    with torch.no_grad():
        pred = logits.argmax(-1)
        real = labels != pad_id
        correct = ((pred == labels) | ~real).all(dim=1)
        acc = correct.float().mean().item()
    return loss, acc


# ---------------------------------------------------------------------------
# Training

def train(train_batch: Batch, val_batch: Optional[Batch],
          model_cfg: ModelConfig, opt_cfg: OptimizerConfig,
          vocab: Vocabulary, checkpoint_path: str | Path,
          metrics_path: str | Path, log=None) -> HierTransformer:
    """Adam with the inverse-square-root warmup schedule; keeps the
    checkpoint with the best validation accuracy-per-sequence and writes a
    (step, split, loss, accuracy-per-sequence) CSV log."""
    torch.manual_seed(opt_cfg.seed)
    model = HierTransformer(model_cfg)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=learning_rate(1, model_cfg.d_model,
                                             opt_cfg.warmup_steps),
        betas=(opt_cfg.beta1, opt_cfg.beta2), eps=opt_cfg.eps)
    gen = torch.Generator().manual_seed(opt_cfg.seed)
    n = train_batch.tokens.shape[0]
    pad_id = vocab.pad_id
    rows = []
    best_acc = -1.0
    saved = False

    perm = torch.randperm(n, generator=gen)
    cursor = 0

    def next_indices(size: int) -> torch.Tensor:
        nonlocal perm, cursor
        taken = []
        while len(taken) < size:
            if cursor >= n:
                perm = torch.randperm(n, generator=gen)
                cursor = 0
            taken.append(perm[cursor])
            cursor += 1
        return torch.stack(taken)

    for step in range(1, opt_cfg.train_steps + 1):
        lr = learning_rate(step, model_cfg.d_model, opt_cfg.warmup_steps)
        for group in optimizer.param_groups:
            group["lr"] = lr
        idx = next_indices(min(opt_cfg.batch_size, n))
        part = batch_rows(train_batch, idx)
        model.train()
        logits = model(part.tokens, part.positions, part.mask, part.target_in)
        loss, acc = sequence_metrics(logits, part.labels, pad_id)
        if not torch.isfinite(loss):
            raise ModelError(
                f"training diverged: loss {loss.item()} at step {step} "
                f"(lr {lr:.3e})")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        rows.append((step, "train", float(loss.item()), acc))

        if step % opt_cfg.eval_every == 0 or step == opt_cfg.train_steps:
            val_acc = acc
            if val_batch is not None:
                val_loss, val_acc = evaluate_teacher_forced(
                    model, val_batch, pad_id)
                rows.append((step, "val", val_loss, val_acc))
            if val_acc >= best_acc:
                best_acc = val_acc
                save_checkpoint(checkpoint_path, model, vocab)
                saved = True
            if log:
                log(f"step {step}: loss {loss.item():.4f} "
                    f"acc/seq {acc:.3f} best-val {best_acc:.3f}")

    if not saved:
        save_checkpoint(checkpoint_path, model, vocab)
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "split", "loss", "accuracy_per_sequence"])
        writer.writerows(rows)
    return load_checkpoint(checkpoint_path)[0]


def evaluate_teacher_forced(model: HierTransformer, batch: Batch,
                            pad_id: int, chunk: int = 64,
                            ) -> tuple[float, float]:
    model.eval()
    losses, correct, total = [], 0, 0
    with torch.no_grad():
        for lo in range(0, batch.tokens.shape[0], chunk):
            part = batch_rows(batch, slice(lo, lo + chunk))
            logits = model(part.tokens, part.positions, part.mask,
                           part.target_in)
            loss, _ = sequence_metrics(logits, part.labels, pad_id)
            losses.append(loss.item() * part.tokens.shape[0])
            pred = logits.argmax(-1)
            real = part.labels != pad_id
            correct += int(((pred == part.labels) | ~real).all(dim=1).sum())
            total += part.tokens.shape[0]
    return sum(losses) / total, correct / total


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(path: str | Path, model: HierTransformer,
                    vocab: Vocabulary) -> None:
    arrays = {f"param/{name}": tensor.detach().cpu().to(torch.float32).numpy()
              if tensor.is_floating_point() else tensor.detach().cpu().numpy()
              for name, tensor in model.state_dict().items()}
    meta = {
        "model_config": asdict(model.cfg),
        "precision": "float32",
        "vocab": json.loads(vocab.to_json()),
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str | Path) -> tuple[HierTransformer, Vocabulary]:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["__meta__"]))
    cfg = ModelConfig(**meta["model_config"])
    vocab = Vocabulary(tuple(meta["vocab"]["tokens"]),
                       int(meta["vocab"]["var_cap"]))
    model = HierTransformer(cfg)
    state = {name[len("param/"):]: torch.from_numpy(data[name])
             for name in data.files if name.startswith("param/")}
    model.load_state_dict(state)
    model.eval()
    return model, vocab


# ---------------------------------------------------------------------------
# Decoding

@dataclass(frozen=True)
class BeamHypothesis:
    token_ids: tuple[int, ...]  # without the START token
    score: float
    finished: bool


def beam_search(model: HierTransformer, spec_batch: Batch, vocab: Vocabulary,
                beam_size: int, max_length: Optional[int] = None,
                ) -> list[BeamHypothesis]:
    """Width-k beam over token log-probabilities, no length normalization,
    ties broken by lower token id; k = 1 is greedy decoding. The batch
    must hold exactly one specification."""
    from . import tokenizer as tok
    if beam_size < 1:
        raise ModelError("beam size must be at least 1")
    if spec_batch.tokens.shape[0] != 1:
        raise ModelError("beam search expects a single specification")
    cfg = model.cfg
    if max_length is None:
        max_length = cfg.max_target_length
    max_length = min(max_length, cfg.max_target_length)
    start_id, eos_id = vocab.id(tok.START), vocab.id(tok.EOS)

    model.eval()
    with torch.no_grad():
        memory, memory_mask = model.encode(
            spec_batch.tokens, spec_batch.positions, spec_batch.mask)
        beams = [BeamHypothesis((), 0.0, False)]
        for _ in range(max_length):
            live = [h for h in beams if not h.finished]
            if not live:
                break
            target_in = torch.tensor(
                [(start_id,) + h.token_ids for h in live], dtype=torch.int64)
            mem = memory.expand(len(live), -1, -1)
            mem_mask = memory_mask.expand(len(live), -1)
            logits = model.decode(mem, mem_mask, target_in)
            logprobs = F.log_softmax(logits[:, -1, :].double(), dim=-1)
            candidates = [h for h in beams if h.finished]
            for row, hyp in enumerate(live):
                lp = logprobs[row]
                for token_id in range(lp.shape[0]):
                    candidates.append(BeamHypothesis(
                        hyp.token_ids + (token_id,),
                        hyp.score + float(lp[token_id]),
                        token_id == eos_id))
            candidates.sort(key=lambda h: (-h.score, h.token_ids))
            beams = candidates[:beam_size]
            if len(beams[0].token_ids) >= max_length:
                break
        finalized = [
            h if h.finished else BeamHypothesis(h.token_ids, h.score, True)
            for h in beams]
        finalized.sort(key=lambda h: (-h.score, h.token_ids))
        return finalized


def greedy_decode(model: HierTransformer, spec_batch: Batch,
                  vocab: Vocabulary,
                  max_length: Optional[int] = None) -> BeamHypothesis:
    return beam_search(model, spec_batch, vocab, 1, max_length)[0]


# ---------------------------------------------------------------------------
# Gradient checking

@dataclass(frozen=True)
class GradientCheckResult:
    max_relative_error: float  # worst tensor: ||num - ana||_inf / grad scale
    checked_entries: int
    skipped_entries: int  # perturbation crossed a ReLU kink: no derivative
    per_tensor: dict = field(default_factory=dict, compare=False)


def gradient_check(model_cfg: Optional[ModelConfig] = None, seed: int = 0,
                   step_size: float = 1e-3, atol: float = 1e-9,
                   max_entries_per_tensor: int = 0) -> GradientCheckResult:
    """Compare backprop gradients with central finite differences in
    double precision on a miniature model, covering every parameter
    tensor.

    The relative error of a tensor is the largest entrywise difference
    divided by the largest gradient magnitude in that tensor, so the
    finite-difference truncation noise on near-zero entries is measured
    against the tensor's gradient scale. Entries whose +/- step flips the
    sign of some ReLU pre-activation are skipped: the loss is not
    differentiable on that interval, so the central difference does not
    estimate a derivative there."""
    if model_cfg is None:
        model_cfg = ModelConfig(
            vocab_size=16, d_model=8, d_ff=16, local_layers=1,
            global_layers=1, decoder_layers=1, heads=2, max_props=2,
            prop_length=4, max_target_length=6, dropout=0.0, tree_depth=2)
    torch.manual_seed(seed)
    model = HierTransformer(model_cfg).double()
    model.eval()  # dropout off; loss must be deterministic

    gen = torch.Generator().manual_seed(seed + 1)
    b = 2
    tokens = torch.randint(1, model_cfg.vocab_size,
                           (b, model_cfg.max_props, model_cfg.prop_length),
                           generator=gen)
    positions = torch.randint(
        0, 2, (b, model_cfg.max_props, model_cfg.prop_length,
               2 * model_cfg.tree_depth), generator=gen).to(torch.int8)
    mask = torch.ones(b, model_cfg.max_props, model_cfg.prop_length,
                      dtype=torch.bool)
    mask[:, -1, -1] = False  # exercise the padding path
    target_in = torch.randint(1, model_cfg.vocab_size,
                              (b, model_cfg.max_target_length - 1),
                              generator=gen)
    labels = torch.randint(1, model_cfg.vocab_size,
                           (b, model_cfg.max_target_length - 1),
                           generator=gen)

    relu_signs: list[torch.Tensor] = []
    hooks = []
    for module in model.modules():
        if isinstance(module, nn.ReLU):
            hooks.append(module.register_forward_pre_hook(
                lambda mod, inp: relu_signs.append(inp[0].detach() > 0)))

    def loss_and_signs() -> tuple[float, list[torch.Tensor]]:
        relu_signs.clear()
        logits = model(tokens, positions, mask, target_in)
        loss = F.cross_entropy(
            logits.reshape(-1, model_cfg.vocab_size), labels.reshape(-1))
        return float(loss.detach()), list(relu_signs)

    relu_signs.clear()
    logits = model(tokens, positions, mask, target_in)
    loss = F.cross_entropy(
        logits.reshape(-1, model_cfg.vocab_size), labels.reshape(-1))
    model.zero_grad()
    loss.backward()

    worst = 0.0
    checked = skipped = 0
    per_tensor: dict[str, float] = {}
    with torch.no_grad():
        for name, param in model.named_parameters():
            grad = param.grad
            if grad is None:
                raise ModelError(f"parameter {name} received no gradient")
            flat = param.data.view(-1)
            grad_flat = grad.view(-1)
            count = flat.numel()
            if max_entries_per_tensor and count > max_entries_per_tensor:
                count = max_entries_per_tensor
            max_diff = 0.0
            scale = 0.0
            for j in range(count):
                original = flat[j].item()
                flat[j] = original + step_size
                high, signs_high = loss_and_signs()
                flat[j] = original - step_size
                low, signs_low = loss_and_signs()
                flat[j] = original
                if any(not torch.equal(a, b)
                       for a, b in zip(signs_high, signs_low)):
                    skipped += 1
                    continue
                checked += 1
                numeric = (high - low) / (2 * step_size)
                analytic = grad_flat[j].item()
                max_diff = max(max_diff, abs(numeric - analytic))
                scale = max(scale, abs(numeric), abs(analytic))
            # below atol the difference is float64 finite-difference noise
            # (some tensors, like key biases, have mathematically zero
            # gradients); anything real sits orders of magnitude higher
            rel = 0.0 if max_diff <= atol else max_diff / max(scale, 1e-12)
            per_tensor[name] = rel
            worst = max(worst, rel)
    for h in hooks:
        h.remove()
    return GradientCheckResult(worst, checked, skipped, per_tensor)
