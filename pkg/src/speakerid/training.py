from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import torch

from .backend import CapabilityError, Seq2SeqBackend, SequencePair
from .corpus import NovelCorpus, SplitSpec, select
from .templates import (DEFAULT_TEMPLATE, AuxTask, BudgetError, PromptTemplate, RenderedPair,
                        TokenCounter, get_template, render_source, render_target)

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


class TrainingError(ValueError):
    pass


@dataclass
class TrainingConfig:
    template: str = DEFAULT_TEMPLATE
    aux_task: str | None = None  # overrides the template's own auxiliary task when set
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float | None = None
    max_source_tokens: int = 512
    seed: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.aux_task is not None:
            AuxTask(self.aux_task)
        self.resolved_template()

    def resolved_template(self) -> PromptTemplate:
        t = get_template(self.template)
        if self.aux_task is None or AuxTask(self.aux_task) is t.aux_task:
            return t
        base = t.without_aux()
        if AuxTask(self.aux_task) is AuxTask.NONE:
            return base
        return get_template(f"{base.name}+{self.aux_task}")


@dataclass
class Checkpoint:
    path: Path | None
    manifest: dict = field(default_factory=dict)

    @property
    def epoch_losses(self) -> list[float]:
        return [e["loss"] for e in self.manifest.get("epoch_losses", [])]


def build_training_pairs(corpus: NovelCorpus, ids: Iterable[tuple[str, str]], template: PromptTemplate,
                         counter: TokenCounter, budget: int) -> list[RenderedPair]:
    """One (source, gold target) pair per quotation, ordered by (novel_id, quote_id).

    The target names the gold speaker by canonical name; auxiliary clauses use
    the gold addressees, the speaker's gender or the novel id as title.
    """
    pairs = []
    for q in sorted(select(corpus, ids), key=lambda q: q.key):
        roster = corpus.roster(q.novel_id)
        try:
            speaker = roster.get(q.speaker_id)
            # roster order for addressees
            wanted = set(q.addressee_ids)
            addressees = [e for e in roster if e.character_id in wanted]
            if len(addressees) != len(wanted):
                raise KeyError(sorted(wanted - {e.character_id for e in addressees}))
        except KeyError as e:
            raise TrainingError(f"quotation {q.key}: gold label {e.args[0]!r} not in roster") from None
        source = render_source(q, template, budget, counter)
        target = render_target(speaker, template, addressees, novel_title=q.novel_id)
        pairs.append(RenderedPair(source.source_text, target, source.spans))
    return pairs


def pairs_fingerprint(pairs: Iterable[RenderedPair]) -> str:
    h = hashlib.sha256()
    for p in pairs:
        h.update(f"{p.source_text}\t{p.target_text}\n".encode("utf-8"))
    return h.hexdigest()


def read_manifest(directory: str | Path) -> dict:
    path = Path(directory) / MANIFEST_FILE
    if not path.exists():
        raise FileNotFoundError(f"expected checkpoint manifest at {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def train(corpus: NovelCorpus, split: SplitSpec, config: TrainingConfig, backend: Seq2SeqBackend, *,
          resume: bool = False) -> Checkpoint:
    """Teacher-forced fine-tuning on the train side of `split`.

    With `resume`, `backend` must already hold the weights stored in
    ``config.checkpoint_dir``; epochs are numbered on from its manifest.
    """
    if not backend.trainable:
        raise CapabilityError("backend not trainable")
    template = config.resolved_template()
    minimal = backend.num_special_tokens + backend.num_tokens(
        " ".join(["x", template.source_infix, *[backend.mask_token] * template.mask_count,
                  template.aux_source_infix]))
    if config.max_source_tokens < minimal:
        raise BudgetError(f"max_source_tokens={config.max_source_tokens} below the template minimum {minimal}")
    if config.learning_rate is not None:
        backend.learning_rate = config.learning_rate

    pairs = build_training_pairs(corpus, split.train_ids, template, backend, config.max_source_tokens)
    if not pairs:
        raise TrainingError(f"split {split.name!r} fold {split.fold_index} has no training quotations")
    encoded = [backend.pair(p.source_text, p.target_text) for p in pairs]

    history: list[dict] = []
    if resume:
        if not config.checkpoint_dir:
            raise TrainingError("resume needs checkpoint_dir")
        history = list(read_manifest(config.checkpoint_dir).get("epoch_losses", []))
    start = len(history)

    torch.manual_seed(config.seed + start)
    for epoch in range(start + 1, start + config.epochs + 1):
        order = list(range(len(encoded)))
        random.Random(config.seed * 100_003 + epoch).shuffle(order)
        total, seen = 0.0, 0
        for b in range(0, len(order), config.batch_size):
            batch: list[SequencePair] = [encoded[i] for i in order[b:b + config.batch_size]]
            total += backend.fit_step(batch) * len(batch)
            seen += len(batch)
        history.append({"epoch": epoch, "loss": total / seen})
        logger.info("epoch %d: mean loss %.4f", epoch, total / seen)

    manifest = {
        "template": template.name,
        "template_definition": template.as_dict(),
        "aux_task": template.aux_task.value,
        "seed": config.seed,
        "epochs": len(history),
        "config": asdict(config),
        "split": {"name": split.name, "fold": split.fold_index},
        "n_pairs": len(pairs),
        "dataset_fingerprint": pairs_fingerprint(pairs),
        "epoch_losses": history,
        "backend": {"name": backend.name, **backend.hyperparameters()},
    }
    path = None
    if config.checkpoint_dir:
        path = Path(config.checkpoint_dir)
        backend.save(path)
        (path / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return Checkpoint(path, manifest)
