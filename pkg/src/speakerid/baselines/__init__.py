from .encoder import EncoderBaselineError, EncoderClassifier, LabelSpace, encoder_predict, encoder_train
from .llm import (ChatCompletionsClient, ResponseCache, StubClient, TransportError, build_prompt, llm_zero_shot,
                  prompt_hash, run_llm_baseline)

__all__ = ["ChatCompletionsClient", "EncoderBaselineError", "EncoderClassifier", "LabelSpace", "ResponseCache",
           "StubClient", "TransportError", "build_prompt", "encoder_predict", "encoder_train", "llm_zero_shot",
           "prompt_hash", "run_llm_baseline"]
