"""Adapter for Hugging Face encoder-decoder models (BART and relatives).

`HFSeq2SeqBackend.from_pretrained("facebook/bart-base")` wraps a released
checkpoint; `HFSeq2SeqBackend.tiny(texts)` builds a small randomly initialised
BART with a word-level vocabulary over `texts`, which is what the test suite
and the synthetic pipeline train.  Words outside a tiny vocabulary map to
``<unk>``.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from transformers.utils import logging as hf_logging

from .base import BackendError, Seq2SeqBackend, SequencePair

logger = logging.getLogger(__name__)

hf_logging.disable_progress_bar()

SPECIALS = ["<s>", "<pad>", "</s>", "<unk>", "<mask>"]
CONFIG_FILE = "backend.json"
OPTIMIZER_FILE = "optimizer.pt"


def build_word_tokenizer(texts: Iterable[str], min_count: int = 1):
    """A whitespace word-level fast tokenizer that adds ``<s> ... </s>``."""
    from collections import Counter

    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import WhitespaceSplit
    from tokenizers.processors import TemplateProcessing
    from transformers import PreTrainedTokenizerFast

    counts = Counter(w for t in texts for w in t.split())
    words = sorted(w for w, n in counts.items() if n >= min_count and w not in SPECIALS)
    vocab = {w: i for i, w in enumerate(SPECIALS + words)}
    tok = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = WhitespaceSplit()
    tok.post_processor = TemplateProcessing(
        single="<s> $A </s>", special_tokens=[("<s>", vocab["<s>"]), ("</s>", vocab["</s>"])]
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tok, bos_token="<s>", eos_token="</s>", pad_token="<pad>",
        unk_token="<unk>", mask_token="<mask>",
    )


class HFSeq2SeqBackend(Seq2SeqBackend):
    name = "hf"
    trainable = True

    def __init__(self, model, tokenizer, *, learning_rate: float = 5e-5, weight_decay: float = 0.0,
                 grad_clip: float = 1.0, device: str = "cpu"):
        self.model = model.to(device)
        self.tokenizer = tokenizer
        self.device = device
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.grad_clip = grad_clip
        self.mask_token = tokenizer.mask_token
        self.num_special_tokens = len(tokenizer("")["input_ids"])
        self.max_source_tokens = model.config.max_position_embeddings
        self.eos_token_id = tokenizer.eos_token_id
        self.pad_token_id = tokenizer.pad_token_id
        self.decoder_start_token_id = model.config.decoder_start_token_id
        self._optimizer = None
        self._encoded: tuple | None = None

    # -- construction -----------------------------------------------------

    @classmethod
    def from_pretrained(cls, name_or_path: str, **kwargs) -> "HFSeq2SeqBackend":
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        model = AutoModelForSeq2SeqLM.from_pretrained(name_or_path)
        return cls(model, tokenizer, **kwargs)

    @classmethod
    def tiny(cls, texts: Iterable[str], *, d_model: int = 64, layers: int = 2, heads: int = 4,
             ffn_dim: int = 128, max_positions: int = 256, seed: int = 0,
             learning_rate: float = 1e-3, dtype: torch.dtype = torch.float64) -> "HFSeq2SeqBackend":
        """Small randomly initialised BART over a word vocabulary drawn from `texts`.

        Dropout is off so training-mode and evaluation-mode forward passes agree.
        """
        from transformers import BartConfig, BartForConditionalGeneration

        tokenizer = build_word_tokenizer(texts)
        config = BartConfig(
            vocab_size=len(tokenizer), d_model=d_model,
            encoder_layers=layers, decoder_layers=layers,
            encoder_attention_heads=heads, decoder_attention_heads=heads,
            encoder_ffn_dim=ffn_dim, decoder_ffn_dim=ffn_dim,
            max_position_embeddings=max_positions,
            dropout=0.0, attention_dropout=0.0, activation_dropout=0.0,
            bos_token_id=tokenizer.bos_token_id, pad_token_id=tokenizer.pad_token_id,
            eos_token_id=tokenizer.eos_token_id, decoder_start_token_id=tokenizer.eos_token_id,
            forced_eos_token_id=None, forced_bos_token_id=None,
        )
        torch.manual_seed(seed)
        model = BartForConditionalGeneration(config).to(dtype)
        return cls(model, tokenizer, learning_rate=learning_rate)

    @classmethod
    def load(cls, directory: str | Path, device: str = "cpu") -> "HFSeq2SeqBackend":
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        directory = Path(directory)
        if not (directory / CONFIG_FILE).exists():
            raise BackendError(f"no backend checkpoint in {directory}")
        settings = json.loads((directory / CONFIG_FILE).read_text())
        tokenizer = AutoTokenizer.from_pretrained(directory)
        model = AutoModelForSeq2SeqLM.from_pretrained(directory, dtype=getattr(torch, settings["dtype"]))
        backend = cls(model, tokenizer, learning_rate=settings["learning_rate"],
                      weight_decay=settings["weight_decay"], grad_clip=settings["grad_clip"], device=device)
        if (directory / OPTIMIZER_FILE).exists():
            backend._make_optimizer().load_state_dict(torch.load(directory / OPTIMIZER_FILE))
        return backend

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.model.save_pretrained(directory)
        self.tokenizer.save_pretrained(directory)
        (directory / CONFIG_FILE).write_text(json.dumps(self.hyperparameters(), indent=2, sort_keys=True))
        if self._optimizer is not None:
            torch.save(self._optimizer.state_dict(), directory / OPTIMIZER_FILE)

    def hyperparameters(self) -> dict:
        return {
            "model_type": self.model.config.model_type,
            "dtype": str(self.model.dtype).replace("torch.", ""),
            "optimizer": "AdamW",
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "grad_clip": self.grad_clip,
            "d_model": self.model.config.d_model,
            "vocab_size": self.model.config.vocab_size,
        }

    # -- tokenization -----------------------------------------------------

    def num_tokens(self, text: str) -> int:
        return len(self.tokenizer(text, add_special_tokens=False)["input_ids"])

    def encode_source(self, text: str) -> list[int]:
        return list(self.tokenizer(text)["input_ids"])

    def encode_target(self, text: str) -> list[int]:
        return list(self.tokenizer(text_target=text)["input_ids"])

    def decode(self, token_ids: Sequence[int]) -> str:
        return self.tokenizer.decode(list(token_ids), skip_special_tokens=True).strip()

    def target_offsets(self, text: str) -> list[tuple[int, int]]:
        enc = self.tokenizer(text_target=text, return_offsets_mapping=True)
        return [tuple(o) for o in enc["offset_mapping"]]

    # -- forward passes ---------------------------------------------------

    def _tensor(self, rows: Sequence[Sequence[int]], pad: int) -> tuple[torch.Tensor, torch.Tensor]:
        width = max(len(r) for r in rows)
        ids = torch.full((len(rows), width), pad, dtype=torch.long)
        mask = torch.zeros((len(rows), width), dtype=torch.long)
        for i, r in enumerate(rows):
            ids[i, :len(r)] = torch.tensor(r, dtype=torch.long)
            mask[i, :len(r)] = 1
        return ids.to(self.device), mask.to(self.device)

    def _decoder_inputs(self, targets: Sequence[Sequence[int]]) -> list[list[int]]:
        return [[self.decoder_start_token_id, *t[:-1]] for t in targets]

    def _check_source(self, source_tokens: Sequence[int]) -> None:
        if len(source_tokens) > self.max_source_tokens:
            raise BackendError(
                f"source has {len(source_tokens)} tokens, model maximum is {self.max_source_tokens}"
            )

    def _encode(self, source_tokens: Sequence[int]):
        key = tuple(source_tokens)
        if self._encoded is None or self._encoded[0] != key:
            self._check_source(key)
            ids, mask = self._tensor([key], self.pad_token_id)
            with torch.no_grad():
                hidden = self.model.get_encoder()(input_ids=ids, attention_mask=mask).last_hidden_state
            self._encoded = (key, hidden, mask)
        return self._encoded[1], self._encoded[2]

    def _gold_log_probs(self, logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        logp = F.log_softmax(logits.double(), dim=-1)
        return logp.gather(-1, targets.clamp(min=0).unsqueeze(-1)).squeeze(-1)

    def teacher_forced_probs(self, pair: SequencePair) -> list[float]:
        return self.teacher_forced_probs_many(pair.source_tokens, [pair.target_tokens])[0]

    def teacher_forced_probs_many(self, source_tokens, targets):
        """Score several targets against one source; the encoder runs once."""
        self.model.eval()
        hidden, src_mask = self._encode(source_tokens)
        out = []
        # one decoder pass per target keeps candidates fully independent
        for target in targets:
            dec, _ = self._tensor(self._decoder_inputs([target]), self.pad_token_id)
            gold = torch.tensor([list(target)], dtype=torch.long, device=self.device)
            with torch.no_grad():
                logits = self.model(encoder_outputs=(hidden,), attention_mask=src_mask,
                                    decoder_input_ids=dec).logits
            out.append(self._gold_log_probs(logits, gold)[0].exp().tolist())
        return out

    def next_token_probs(self, source_tokens, prefix) -> np.ndarray:
        self.model.eval()
        hidden, src_mask = self._encode(source_tokens)
        dec = torch.tensor([[self.decoder_start_token_id, *prefix]], dtype=torch.long, device=self.device)
        with torch.no_grad():
            logits = self.model(encoder_outputs=(hidden,), attention_mask=src_mask, decoder_input_ids=dec).logits
        return F.softmax(logits[0, -1].double(), dim=-1).cpu().numpy()

    def target_token_embeddings(self, pair: SequencePair) -> np.ndarray:
        """Final decoder-layer state at the input position of each target token."""
        self.model.eval()
        hidden, src_mask = self._encode(pair.source_tokens)
        dec = torch.tensor([[self.decoder_start_token_id, *pair.target_tokens]], dtype=torch.long,
                           device=self.device)
        with torch.no_grad():
            out = self.model(encoder_outputs=(hidden,), attention_mask=src_mask, decoder_input_ids=dec,
                             output_hidden_states=True)
        return out.decoder_hidden_states[-1][0, 1:].double().cpu().numpy()

    # -- training ---------------------------------------------------------

    def _make_optimizer(self):
        if self._optimizer is None:
            self._optimizer = torch.optim.AdamW(self.model.parameters(), lr=self.learning_rate,
                                                weight_decay=self.weight_decay)
        return self._optimizer

    def sequence_nll(self, batch: Sequence[SequencePair]) -> torch.Tensor:
        """-sum_c log p(t_c | t_<c, X) per pair, differentiable."""
        for p in batch:
            self._check_source(p.source_tokens)
        src, src_mask = self._tensor([p.source_tokens for p in batch], self.pad_token_id)
        dec, _ = self._tensor(self._decoder_inputs([p.target_tokens for p in batch]), self.pad_token_id)
        gold, gold_mask = self._tensor([p.target_tokens for p in batch], -100)
        logits = self.model(input_ids=src, attention_mask=src_mask, decoder_input_ids=dec).logits
        logp = self._gold_log_probs(logits, gold) * gold_mask
        return -logp.sum(dim=1)

    def fit_step(self, batch: Sequence[SequencePair]) -> float:
        """One optimizer update; returns the batch mean of per-sequence NLL before the update."""
        if not batch:
            raise BackendError("empty batch")
        self.model.train()
        self._encoded = None
        optimizer = self._make_optimizer()
        loss = self.sequence_nll(batch).mean()
        optimizer.zero_grad()
        loss.backward()
        if self.grad_clip:
            torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.grad_clip)
        optimizer.step()
        self.model.eval()
        return float(loss.item())
