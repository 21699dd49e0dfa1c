"""Narrative-text embeddings: frozen multilingual transformer, mean pooled.

Preprocessing mirrors the classifier's text contract: lowercasing and
punctuation normalization, optional boilerplate removal, truncation or
padding to a fixed maximum length.  Sentence vectors are attention-masked
mean pools of the last hidden states.

When pretrained weights are unavailable (or disabled), a small seeded
randomly-initialized transformer plus a hashing tokenizer stands in: the
wire format, preprocessing, and determinism guarantees are identical, only
the representation quality differs.
"""

from __future__ import annotations

import hashlib
import logging
import string

import torch

from .glaemb import write_glaemb
from .job import ExportJob, MissingWeights

logger = logging.getLogger("glarisk_exporter.texts")

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})

HASH_VOCAB = 30_000
PAD_ID, CLS_ID = 0, 1


def normalize_text(text: str, strip_boilerplate: tuple[str, ...] = ()) -> str:
    text = text.lower()
    for boilerplate in strip_boilerplate:
        text = text.replace(boilerplate.lower(), " ")
    return " ".join(text.translate(_PUNCT_TABLE).split())


def _hash_token(token: str) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return 2 + int.from_bytes(digest[:4], "little") % (HASH_VOCAB - 2)


class HashingTokenizer:
    """Whitespace tokenizer with stable hashed ids; offline stand-in."""

    def __call__(self, texts: list[str], max_length: int):
        ids = []
        mask = []
        for text in texts:
            tokens = [CLS_ID] + [_hash_token(t) for t in text.split()]
            tokens = tokens[:max_length]
            pad = max_length - len(tokens)
            ids.append(tokens + [PAD_ID] * pad)
            mask.append([1] * (max_length - pad) + [0] * pad)
        return (torch.tensor(ids, dtype=torch.long),
                torch.tensor(mask, dtype=torch.long))


def build_text_encoder(job: ExportJob):
    """(encode(texts) -> tensor, dim) pair, pretrained or seeded-random."""
    if job.pretrained:
        try:
            from transformers import AutoModel, AutoTokenizer

            tokenizer = AutoTokenizer.from_pretrained(job.text_model)
            model = AutoModel.from_pretrained(job.text_model)
        except Exception as exc:
            raise MissingWeights(
                f"pretrained text model {job.text_model!r} unavailable ({exc}); "
                "pass --no-pretrained for a seeded random initialization"
            ) from exc
        model.eval()
        for p in model.parameters():
            p.requires_grad_(False)
        model.to(job.device)
        dim = model.config.hidden_size

        def encode(texts: list[str]) -> torch.Tensor:
            batch = tokenizer(texts, padding="max_length", truncation=True,
                              max_length=job.max_text_length, return_tensors="pt")
            batch = {k: v.to(job.device) for k, v in batch.items()}
            with torch.no_grad():
                hidden = model(**batch).last_hidden_state
            return _masked_mean(hidden, batch["attention_mask"])

        return encode, dim

    from transformers import BertConfig, BertModel

    torch.manual_seed(job.seed)
    config = BertConfig(vocab_size=HASH_VOCAB,
                        hidden_size=job.text_hidden,
                        num_hidden_layers=job.text_layers,
                        num_attention_heads=max(1, job.text_hidden // 64),
                        intermediate_size=job.text_hidden * 4,
                        max_position_embeddings=max(job.max_text_length, 16))
    model = BertModel(config)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    model.to(job.device)
    tokenizer = HashingTokenizer()

    def encode(texts: list[str]) -> torch.Tensor:
        ids, mask = tokenizer(texts, job.max_text_length)
        with torch.no_grad():
            hidden = model(input_ids=ids.to(job.device),
                           attention_mask=mask.to(job.device)).last_hidden_state
        return _masked_mean(hidden, mask.to(job.device))

    return encode, job.text_hidden


def _masked_mean(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean-pool token states, counting only real (unpadded) positions."""
    mask = mask.unsqueeze(-1).to(hidden.dtype)
    summed = (hidden * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1.0)
    return summed / counts


def export_text_embeddings(job: ExportJob) -> int:
    """Encode every manifest text and write the GLAEMB table."""
    entries = job.text_entries()
    if job.texts_out is None:
        raise ValueError("job has no text output path")
    torch.set_num_threads(1)
    encode, dim = build_text_encoder(job)
    rows: list[tuple[str, list[float]]] = []
    for start in range(0, len(entries), job.batch_size):
        batch = entries[start:start + job.batch_size]
        texts = [normalize_text(e.text, job.strip_boilerplate) for e in batch]
        vectors = encode(texts).cpu()
        rows.extend((e.id, vec.tolist()) for e, vec in zip(batch, vectors))
    count = write_glaemb(rows, dim, job.texts_out)
    logger.info("wrote %d text vectors (dim %d, %s) to %s",
                count, dim,
                "pretrained " + job.text_model if job.pretrained
                else f"seeded init {job.seed}",
                job.texts_out)
    return count
