"""Small random ABS models for decoding tests: 6 target ids, bos 0, eos 5."""

import torch

from facetrank.abs import AbsModel, DecoderConfig, hypothesis_score, model_step, sequence_logprob
from facetrank.nn import EncoderConfig

BOS, EOS = 0, 5
CANDIDATES = [1, 2, 3, 4, 5]
SOURCE_LEN = 5


def toy_abs(seed, scale=0.3, max_len=4):
    torch.manual_seed(seed)
    model = AbsModel(
        EncoderConfig(vocab_size=10, layers=1, model_dim=8, heads=2, ffn_dim=16, max_positions=8),
        DecoderConfig(6, layers=1, model_dim=8, heads=2, ffn_dim=16, decoder_embed_dim=8, max_target_len=max_len),
    ).double().eval()
    with torch.no_grad():
        for p in model.parameters():
            p.normal_(0.0, scale)
        ids = torch.randint(0, 10, (1, SOURCE_LEN))
        mask = torch.ones(1, SOURCE_LEN, dtype=torch.bool)
        memory = model.encode(ids, torch.zeros_like(ids), mask)[0]
    return model, memory, mask[0]


def toy_step(model, memory, mask):
    return model_step(model, {None: (memory, mask)})


def toy_score(model, memory, mask, alpha=0.4, beta=0.4):
    def score(seq):
        lp, att = sequence_logprob(model, memory, mask, seq)
        return hypothesis_score(lp, att, alpha, beta)

    return score
