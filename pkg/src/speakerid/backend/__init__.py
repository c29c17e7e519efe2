from .base import BackendError, CapabilityError, Seq2SeqBackend, SequencePair
from .oracle import OracleBackend

BACKENDS = ("tiny", "oracle:<table.json>", "hf:<model name or path>")


def make_backend(spec: str, texts=(), **kwargs) -> Seq2SeqBackend:
    """Build a backend from its command-line identifier."""
    kind, _, arg = spec.partition(":")
    if kind == "oracle":
        return OracleBackend.from_file(arg)
    from .hf import HFSeq2SeqBackend

    if kind == "tiny":
        return HFSeq2SeqBackend.tiny(texts, **kwargs)
    if kind == "hf":
        return HFSeq2SeqBackend.from_pretrained(arg or "facebook/bart-base", **kwargs)
    raise ValueError(f"unknown backend {spec!r}; expected one of {', '.join(BACKENDS)}")


__all__ = ["BackendError", "CapabilityError", "OracleBackend", "Seq2SeqBackend", "SequencePair",
           "make_backend"]
