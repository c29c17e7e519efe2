"""Figures: t-SNE of decoder speaker-name embeddings, and accuracy bars for reports."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .backend import Seq2SeqBackend  # noqa: E402
from .corpus import NovelCorpus, select  # noqa: E402
from .evaluation import CELLS, EvalReport  # noqa: E402
from .templates import PromptTemplate, render_source, render_target  # noqa: E402

TSNE_PERPLEXITY = 30.0
TSNE_SEED = 0


def speaker_embeddings(corpus: NovelCorpus, ids: Iterable[tuple[str, str]], template: PromptTemplate,
                       backend: Seq2SeqBackend, budget: int | None = None):
    """Mean decoder state over the gold speaker-name tokens, one row per quotation.

    Returns (vectors, novel ids, quotation keys).
    """
    vectors, novels, keys = [], [], []
    for q in select(corpus, ids):
        speaker = corpus.roster(q.novel_id).get(q.speaker_id)
        source = render_source(q, template, budget or backend.max_source_tokens, backend)
        target = render_target(speaker, template, with_aux=False)
        start = target.rindex(speaker.canonical_name)
        end = start + len(speaker.canonical_name)
        pair = backend.pair(source.source_text, target)
        states = backend.target_token_embeddings(pair)
        rows = [i for i, (s, e) in enumerate(backend.target_offsets(target)) if e > s and s < end and e > start]
        if not rows:
            raise ValueError(f"quotation {q.key}: speaker name has no target tokens")
        vectors.append(states[rows].mean(axis=0))
        novels.append(q.novel_id)
        keys.append(q.key)
    return np.asarray(vectors), novels, keys


def project_tsne(vectors: np.ndarray, perplexity: float = TSNE_PERPLEXITY, seed: int = TSNE_SEED) -> np.ndarray:
    """2-D t-SNE coordinates; perplexity is capped at (n - 1) / 3 for small inputs."""
    from sklearn.manifold import TSNE

    vectors = np.asarray(vectors, dtype=float)
    n = len(vectors)
    if n < 3:
        return np.zeros((n, 2))
    perplexity = max(1.0, min(perplexity, (n - 1) / 3))
    return TSNE(n_components=2, perplexity=perplexity, random_state=seed, init="pca").fit_transform(vectors)


def plot_embeddings(coords: np.ndarray, groups: Sequence[str], path: str | Path,
                    title: str = "speaker embeddings") -> Path:
    """Scatter with one colour per group (novel)."""
    fig, ax = plt.subplots(figsize=(6, 5))
    names = sorted(set(groups))
    cmap = plt.get_cmap("tab20" if len(names) > 10 else "tab10")
    groups = np.asarray(groups)
    for i, name in enumerate(names):
        sel = groups == name
        ax.scatter(coords[sel, 0], coords[sel, 1], s=10, color=cmap(i % cmap.N), label=name, alpha=0.8)
    ax.set_title(title)
    ax.set_xticks([])
    ax.set_yticks([])
    if len(names) <= 22:
        ax.legend(fontsize=7, markerscale=1.5, frameon=False, loc="best")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_report(report: EvalReport, path: str | Path, method: str = "SIG") -> Path:
    """Mean and median accuracy per quote-type cell; top-k curve when present."""
    topk = report.topk_mean()
    fig, axes = plt.subplots(1, 2 if topk else 1, figsize=(9 if topk else 5.5, 3.8), squeeze=False)
    ax = axes[0, 0]
    x = np.arange(len(CELLS))
    means = [report.mean(c) for c in CELLS]
    medians = [report.median(c) for c in CELLS]
    ax.bar(x - 0.2, [0 if math.isnan(m) else m for m in means], 0.4, label="mean")
    ax.bar(x + 0.2, [0 if math.isnan(m) else m for m in medians], 0.4, label="median")
    ax.set_xticks(x, [c.replace("_", "-") for c in CELLS], rotation=20)
    ax.set_ylim(0, 1)
    ax.set_ylabel("accuracy")
    ax.set_title(f"{method}, {report.n_folds} fold(s)")
    ax.legend(frameon=False)
    if topk:
        ax = axes[0, 1]
        ks = np.arange(1, len(topk) + 1)
        ax.plot(ks, topk, marker="o")
        ax.set_xticks(ks)
        ax.set_ylim(0, 1)
        ax.set_xlabel("k")
        ax.set_title("top-k accuracy")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
