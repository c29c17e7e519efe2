"""Encoder-only speaker classifier over a fixed label space.

The source is rendered with the same template as the generative model; the
hidden state at the first mask (or the first position when the template has
no mask) feeds a linear layer with a softmax over the characters seen in
training.  Characters outside that label space can never be predicted, so
only in-domain splits are accepted.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import nn

from ..corpus import NovelCorpus, QuotationInstance, SplitSpec, select
from ..inference import CandidateScore, RankedPrediction
from ..templates import PromptTemplate, get_template, render_source
from ..training import TrainingConfig

logger = logging.getLogger(__name__)

LABELS_FILE = "labels.json"
HEAD_FILE = "head.pt"


class EncoderBaselineError(ValueError):
    pass


@dataclass(frozen=True)
class LabelSpace:
    """Ordered (novel_id, character_id) labels; the index is the classifier output row."""

    labels: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(tuple(x) for x in self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise EncoderBaselineError("label space repeats a label")

    @classmethod
    def from_instances(cls, instances: Sequence[QuotationInstance]) -> "LabelSpace":
        return cls(tuple(sorted({(q.novel_id, q.speaker_id) for q in instances})))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: tuple[str, str]) -> int:
        return self.labels.index(tuple(label))

    def __contains__(self, label) -> bool:
        return tuple(label) in self.labels


class EncoderClassifier:
    def __init__(self, encoder, tokenizer, labels: LabelSpace, template: PromptTemplate, *,
                 max_source_tokens: int = 256, learning_rate: float = 5e-5):
        self.encoder = encoder
        self.tokenizer = tokenizer
        self.labels = labels
        self.template = template
        self.max_source_tokens = max_source_tokens
        self.learning_rate = learning_rate
        self.head = nn.Linear(encoder.config.hidden_size, len(labels)).to(encoder.dtype)
        self.mask_token = tokenizer.mask_token
        self.num_special_tokens = len(tokenizer("")["input_ids"])

    # TokenCounter protocol, so sources are budgeted in this model's tokens
    def num_tokens(self, text: str) -> int:
        return len(self.tokenizer(text, add_special_tokens=False)["input_ids"])

    @classmethod
    def tiny(cls, texts, labels: LabelSpace, template: PromptTemplate, *, hidden: int = 64, layers: int = 2,
             heads: int = 4, max_source_tokens: int = 128, seed: int = 0,
             learning_rate: float = 1e-3) -> "EncoderClassifier":
        from transformers import RobertaConfig, RobertaModel

        from ..backend.hf import build_word_tokenizer

        tokenizer = build_word_tokenizer(texts)
        config = RobertaConfig(
            vocab_size=len(tokenizer), hidden_size=hidden, num_hidden_layers=layers,
            num_attention_heads=heads, intermediate_size=2 * hidden,
            max_position_embeddings=max_source_tokens + 2, type_vocab_size=1,
            hidden_dropout_prob=0.0, attention_probs_dropout_prob=0.0,
            pad_token_id=tokenizer.pad_token_id, bos_token_id=tokenizer.bos_token_id,
            eos_token_id=tokenizer.eos_token_id,
        )
        torch.manual_seed(seed)
        return cls(RobertaModel(config, add_pooling_layer=False), tokenizer, labels, template,
                   max_source_tokens=max_source_tokens, learning_rate=learning_rate)

    @classmethod
    def from_pretrained(cls, name_or_path: str, labels: LabelSpace, template: PromptTemplate,
                        **kwargs) -> "EncoderClassifier":
        from transformers import AutoModel, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        return cls(AutoModel.from_pretrained(name_or_path), tokenizer, labels, template, **kwargs)

    def parameters(self):
        return list(self.encoder.parameters()) + list(self.head.parameters())

    def _batch(self, instances: Sequence[QuotationInstance]):
        rows, positions = [], []
        mask_id = self.tokenizer.mask_token_id
        for q in instances:
            src = render_source(q, self.template, self.max_source_tokens, self)
            ids = self.tokenizer(src.source_text)["input_ids"]
            rows.append(ids)
            positions.append(ids.index(mask_id) if mask_id in ids else 0)
        width = max(len(r) for r in rows)
        ids = torch.full((len(rows), width), self.tokenizer.pad_token_id, dtype=torch.long)
        attn = torch.zeros((len(rows), width), dtype=torch.long)
        for i, r in enumerate(rows):
            ids[i, :len(r)] = torch.tensor(r)
            attn[i, :len(r)] = 1
        return ids, attn, torch.tensor(positions)

    def logits(self, instances: Sequence[QuotationInstance]) -> torch.Tensor:
        ids, attn, pos = self._batch(instances)
        hidden = self.encoder(input_ids=ids, attention_mask=attn).last_hidden_state
        return self.head(hidden[torch.arange(len(instances)), pos])

    def fit(self, instances: Sequence[QuotationInstance], epochs: int, batch_size: int, seed: int) -> list[float]:
        targets = [self.labels.index((q.novel_id, q.speaker_id)) for q in instances]
        optimizer = torch.optim.AdamW(self.parameters(), lr=self.learning_rate)
        losses = []
        self.encoder.train()
        for epoch in range(1, epochs + 1):
            order = list(range(len(instances)))
            random.Random(seed * 100_003 + epoch).shuffle(order)
            total = 0.0
            for b in range(0, len(order), batch_size):
                idx = order[b:b + batch_size]
                loss = F.cross_entropy(self.logits([instances[i] for i in idx]),
                                       torch.tensor([targets[i] for i in idx]))
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += loss.item() * len(idx)
            losses.append(total / len(instances))
            logger.info("encoder epoch %d: loss %.4f", epoch, losses[-1])
        self.encoder.eval()
        return losses

    def predict(self, instance: QuotationInstance) -> list[tuple[str, float]]:
        """(character_id, probability) over the label space, best first; ties by label index.

        Labels from other novels are left out of the ranking.
        """
        self.encoder.eval()
        with torch.no_grad():
            probs = F.softmax(self.logits([instance])[0].double(), dim=-1).tolist()
        ranked = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
        return [(self.labels.labels[i][1], probs[i]) for i in ranked
                if self.labels.labels[i][0] == instance.novel_id]

    def ranked_prediction(self, instance: QuotationInstance) -> RankedPrediction:
        return RankedPrediction(instance.novel_id, instance.quote_id,
                                tuple(CandidateScore(cid, "", p, ()) for cid, p in self.predict(instance)))

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.encoder.save_pretrained(directory)
        self.tokenizer.save_pretrained(directory)
        torch.save(self.head.state_dict(), directory / HEAD_FILE)
        (directory / LABELS_FILE).write_text(json.dumps({
            "labels": [list(x) for x in self.labels.labels],
            "template": self.template.name,
            "max_source_tokens": self.max_source_tokens,
            "learning_rate": self.learning_rate,
        }, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "EncoderClassifier":
        from transformers import AutoModel, AutoTokenizer

        directory = Path(directory)
        if not (directory / LABELS_FILE).exists():
            raise EncoderBaselineError(f"no encoder checkpoint in {directory}")
        meta = json.loads((directory / LABELS_FILE).read_text(encoding="utf-8"))
        model = cls(AutoModel.from_pretrained(directory), AutoTokenizer.from_pretrained(directory),
                    LabelSpace(tuple(tuple(x) for x in meta["labels"])), get_template(meta["template"]),
                    max_source_tokens=meta["max_source_tokens"], learning_rate=meta["learning_rate"])
        model.head.load_state_dict(torch.load(directory / HEAD_FILE))
        model.encoder.eval()
        return model


def encoder_train(corpus: NovelCorpus, split: SplitSpec, config: TrainingConfig,
                  model: EncoderClassifier | None = None, texts=()) -> EncoderClassifier:
    """Train the classifier on the train side of an in-domain split.

    Without `model`, a tiny randomly initialised encoder is built over `texts`.
    """
    unseen = split.test_novels - split.train_novels
    if unseen:
        raise EncoderBaselineError(
            f"encoder baseline cannot handle unseen speakers: test novels {sorted(unseen)} absent from training"
        )
    train_q = select(corpus, split.train_ids)
    if not train_q:
        raise EncoderBaselineError("no training quotations")
    labels = LabelSpace.from_instances(train_q)
    template = config.resolved_template()
    if model is None:
        model = EncoderClassifier.tiny(texts, labels, template, max_source_tokens=config.max_source_tokens,
                                       seed=config.seed, learning_rate=config.learning_rate or 1e-3)
    elif model.labels != labels:
        raise EncoderBaselineError("model label space differs from the training speakers")
    torch.manual_seed(config.seed)
    model.fit(train_q, config.epochs, config.batch_size, config.seed)
    if config.checkpoint_dir:
        model.save(config.checkpoint_dir)
    return model


def encoder_predict(model: EncoderClassifier, instance: QuotationInstance) -> list[tuple[str, float]]:
    return model.predict(instance)
