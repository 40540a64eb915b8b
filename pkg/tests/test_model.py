import math

import pytest
import torch
import torch.nn.functional as F

from ltl2aig import aiger, ltl, model as M, tokenizer as tok
from ltl2aig.specs import RealizabilityStatus, Specification

VOCAB = tok.build_vocabulary()

SMALL = M.ModelConfig(
    vocab_size=len(VOCAB), d_model=32, d_ff=64, local_layers=2,
    global_layers=2, decoder_layers=2, heads=2, max_props=4,
    prop_length=8, max_target_length=24, dropout=0.0, tree_depth=4)


def small_batch(batch_size=2, seed=0):
    gen = torch.Generator().manual_seed(seed)
    cfg = SMALL
    tokens = torch.randint(7, len(VOCAB),
                           (batch_size, cfg.max_props, cfg.prop_length),
                           generator=gen)
    positions = torch.randint(
        0, 2, (batch_size, cfg.max_props, cfg.prop_length,
               2 * cfg.tree_depth), generator=gen).to(torch.int8)
    mask = torch.ones(batch_size, cfg.max_props, cfg.prop_length,
                      dtype=torch.bool)
    target_in = torch.randint(7, len(VOCAB),
                              (batch_size, cfg.max_target_length),
                              generator=gen)
    labels = torch.randint(7, len(VOCAB),
                           (batch_size, cfg.max_target_length),
                           generator=gen)
    return M.Batch(tokens, positions, mask, target_in, labels)


def test_config_validation():
    with pytest.raises(M.ModelError):
        M.ModelConfig(vocab_size=10, d_model=30, heads=4)
    with pytest.raises(M.ModelError):
        M.OptimizerConfig(beta1=1.2)
    with pytest.raises(M.ModelError):
        M.OptimizerConfig(warmup_steps=0)


def test_learning_rate_schedule_anchors():
    assert M.learning_rate(4000, 256, 4000) == pytest.approx(9.882e-4,
                                                             rel=1e-3)
    assert M.learning_rate(1, 256, 4000) == pytest.approx(2.47e-7, rel=1e-2)
    # rises during warmup, falls afterwards
    assert M.learning_rate(100, 256, 4000) < M.learning_rate(4000, 256, 4000)
    assert M.learning_rate(16000, 256, 4000) == \
        pytest.approx(M.learning_rate(4000, 256, 4000) / 2, rel=1e-9)


def test_decode_normalization_and_shapes():
    torch.manual_seed(0)
    model = M.HierTransformer(SMALL)
    model.eval()
    batch = small_batch()
    logits = model(batch.tokens, batch.positions, batch.mask, batch.target_in)
    assert logits.shape == (2, SMALL.max_target_length, len(VOCAB))
    logp = F.log_softmax(logits.double(), dim=-1)
    sums = torch.logsumexp(logp, dim=-1)
    assert torch.allclose(sums, torch.zeros_like(sums), atol=1e-5)


def test_decoder_causality():
    torch.manual_seed(0)
    model = M.HierTransformer(SMALL)
    model.eval()
    batch = small_batch()
    with torch.no_grad():
        base = model(batch.tokens, batch.positions, batch.mask,
                     batch.target_in)
        changed = batch.target_in.clone()
        t = 10
        changed[:, t] = (changed[:, t] + 1) % len(VOCAB)
        out = model(batch.tokens, batch.positions, batch.mask, changed)
    assert torch.equal(base[:, :t], out[:, :t])
    assert not torch.equal(base[:, t:], out[:, t:])


def test_encoder_determinism():
    torch.manual_seed(0)
    model = M.HierTransformer(SMALL)
    model.eval()
    batch = small_batch()
    with torch.no_grad():
        a, _ = model.encode(batch.tokens, batch.positions, batch.mask)
        b, _ = model.encode(batch.tokens, batch.positions, batch.mask)
    assert torch.equal(a, b)


def test_local_isolation_bitwise():
    torch.manual_seed(1)
    model = M.HierTransformer(SMALL)
    model.eval()
    gen = torch.Generator().manual_seed(7)
    batch = small_batch()
    with torch.no_grad():
        base = model.encode_local(batch.tokens, batch.positions, batch.mask)
        for _ in range(20):
            tokens = batch.tokens.clone()
            tokens[:, 1] = torch.randint(7, len(VOCAB),
                                         (2, SMALL.prop_length),
                                         generator=gen)
            out = model.encode_local(tokens, batch.positions, batch.mask)
            assert torch.equal(out[:, 0], base[:, 0])
            assert torch.equal(out[:, 2:], base[:, 2:])


def test_property_swap_permutes_memory():
    # per-property tree positions are block-local, so swapping two
    # property blocks permutes the global-stage output (up to float
    # summation order, hence the tolerance)
    torch.manual_seed(2)
    model = M.HierTransformer(SMALL).double()
    model.eval()
    batch = small_batch(seed=3)
    t = SMALL.prop_length
    with torch.no_grad():
        mem, _ = model.encode(batch.tokens.clone(),
                              batch.positions.clone(), batch.mask)
        perm_tokens = batch.tokens.clone()
        perm_pos = batch.positions.clone()
        perm_tokens[:, [1, 2]] = perm_tokens[:, [2, 1]]
        perm_pos[:, [1, 2]] = perm_pos[:, [2, 1]]
        mem2, _ = model.encode(perm_tokens, perm_pos, batch.mask)
    blocks = mem.view(2, SMALL.max_props, t, SMALL.d_model)
    blocks2 = mem2.view(2, SMALL.max_props, t, SMALL.d_model)
    assert torch.allclose(blocks2[:, 1], blocks[:, 2], atol=1e-10)
    assert torch.allclose(blocks2[:, 2], blocks[:, 1], atol=1e-10)
    assert torch.allclose(blocks2[:, 0], blocks[:, 0], atol=1e-10)


def test_initial_loss_near_uniform():
    cfg = M.ModelConfig(
        vocab_size=len(VOCAB), d_model=256, d_ff=1024, local_layers=2,
        global_layers=2, decoder_layers=2, heads=4, max_props=3,
        prop_length=8, max_target_length=16, dropout=0.0, tree_depth=4)
    torch.manual_seed(1)
    model = M.HierTransformer(cfg)
    model.eval()
    gen = torch.Generator().manual_seed(2)
    tokens = torch.randint(1, cfg.vocab_size, (4, 3, 8), generator=gen)
    pos = torch.randint(0, 2, (4, 3, 8, 8), generator=gen).to(torch.int8)
    mask = torch.ones(4, 3, 8, dtype=torch.bool)
    tgt = torch.randint(1, cfg.vocab_size, (4, 16), generator=gen)
    labels = torch.randint(1, cfg.vocab_size, (4, 16), generator=gen)
    with torch.no_grad():
        logits = model(tokens, pos, mask, tgt)
    loss, _ = M.sequence_metrics(logits, labels, 0)
    assert abs(loss.item() - math.log(cfg.vocab_size)) \
        <= 0.05 * math.log(cfg.vocab_size)


def test_gradient_check_small_sample():
    # full sweep is in the acceptance suite; spot-check a few entries here
    result = M.gradient_check(seed=0, max_entries_per_tensor=4)
    assert result.max_relative_error <= 1e-4
    assert result.checked_entries > 0


def _toy_samples():
    specs_and_targets = []
    wires = [
        ("G (o0 <-> i0)", "aag 1 1 0 1 0\n2\n2\n"),
        ("G (o0 <-> (! i0))", "aag 1 1 0 1 0\n2\n3\n"),
        ("G (o0 & o0)", "aag 1 1 0 1 0\n2\n1\n"),
        ("G (! o0)", "aag 1 1 0 1 0\n2\n0\n"),
    ]
    for src, aag in wires:
        spec = Specification(("i0",), ("o0",), (), (ltl.parse(src),))
        enc = tok.encode_spec(spec, VOCAB, SMALL.tree_depth,
                              SMALL.prop_length)
        target = tok.encode_circuit(aiger.parse_aiger(aag),
                                    RealizabilityStatus.REALIZABLE, VOCAB)
        specs_and_targets.append((enc, target))
    return specs_and_targets


def test_train_overfits_and_checkpoints(tmp_path):
    data = _toy_samples()
    batch = M.encode_batch(data, SMALL, VOCAB)
    opt = M.OptimizerConfig(batch_size=4, train_steps=300, warmup_steps=40,
                            eval_every=50, seed=0)
    ckpt = tmp_path / "model.npz"
    metrics = tmp_path / "metrics.csv"
    model = M.train(batch, batch, SMALL, opt, VOCAB, ckpt, metrics)
    loss, acc = M.evaluate_teacher_forced(model, batch, VOCAB.pad_id)
    assert acc == 1.0

    # greedy decoding reproduces a memorized target
    one = M.batch_rows(batch, slice(0, 1))
    hyp = M.greedy_decode(model, one, VOCAB)
    assert list(hyp.token_ids) == list(data[0][1])

    # the memorized target also appears within a width-16 beam
    beams = M.beam_search(model, one, VOCAB, 16)
    assert any(list(h.token_ids) == list(data[0][1]) for h in beams)
    scores = [h.score for h in beams]
    assert scores == sorted(scores, reverse=True)

    # checkpoint round trip preserves behavior
    again, vocab2 = M.load_checkpoint(ckpt)
    assert vocab2 == VOCAB
    with torch.no_grad():
        a = model(batch.tokens, batch.positions, batch.mask, batch.target_in)
        b = again(batch.tokens, batch.positions, batch.mask, batch.target_in)
    assert torch.allclose(a, b, atol=1e-6)

    header = (tmp_path / "metrics.csv").read_text().splitlines()[0]
    assert header == "step,split,loss,accuracy_per_sequence"


def test_beam_matches_reference_simulation():
    # independent step-by-step simulation of standard width-k beam search
    torch.manual_seed(5)
    model = M.HierTransformer(SMALL)
    model.eval()
    one = M.batch_rows(small_batch(), slice(0, 1))
    k = 6
    steps = 3
    beams = M.beam_search(model, one, VOCAB, k, max_length=steps)

    start = VOCAB.id(tok.START)
    eos = VOCAB.id(tok.EOS)
    with torch.no_grad():
        memory, memory_mask = model.encode(one.tokens, one.positions, one.mask)

        def logprobs(prefix):
            target = torch.tensor([[start, *prefix]])
            out = model.decode(memory, memory_mask, target)
            return F.log_softmax(out.double()[0, -1], dim=-1)

        hyps = [((), 0.0, False)]
        for _ in range(steps):
            pool = [h for h in hyps if h[2]]
            for prefix, score, finished in hyps:
                if finished:
                    continue
                lp = logprobs(prefix)
                for t in range(len(VOCAB)):
                    pool.append((prefix + (t,), score + float(lp[t]),
                                 t == eos))
            pool.sort(key=lambda h: (-h[1], h[0]))
            hyps = pool[:k]
    hyps.sort(key=lambda h: (-h[1], h[0]))
    assert [h.token_ids for h in beams] == [h[0] for h in hyps]
    # batched vs single-row decoding rounds differently in the last ulps
    for got, (tokens, score, _) in zip(beams, hyps):
        assert got.score == pytest.approx(score, abs=1e-6)
    scores = [h.score for h in beams]
    assert scores == sorted(scores, reverse=True)


def test_train_divergence_detection(tmp_path):
    data = _toy_samples()
    batch = M.encode_batch(data, SMALL, VOCAB)
    # absurd warmup makes step-1 lr finite; force NaN by poisoning a weight
    opt = M.OptimizerConfig(batch_size=4, train_steps=5, warmup_steps=1,
                            eval_every=5, seed=0)
    import unittest.mock as mock
    real_init = M.HierTransformer.__init__

    def poisoned(self, cfg):
        real_init(self, cfg)
        with torch.no_grad():
            self.out_proj.weight[0, 0] = float("nan")

    with mock.patch.object(M.HierTransformer, "__init__", poisoned):
        with pytest.raises(M.ModelError):
            M.train(batch, None, SMALL, opt, VOCAB,
                    tmp_path / "m.npz", tmp_path / "m.csv")
