"""Pointwise cross-encoder scoring (monoT5-style).

The score of a (query, text) pair is the probability of the "true" token
against "false" as the first generated token of a sequence-to-sequence
reranker prompted with ``Query: ... Document: ... Relevant:``.  Weights
are an external artifact; the heavy imports happen lazily so echo mode
works without torch or transformers installed.
"""

from __future__ import annotations

from typing import Sequence


class CrossEncoderScorer:
    def __init__(self, model_id: str, device: str = "cpu", max_length: int = 512):
        import torch
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self._torch = torch
        self.device = device
        self.max_length = max_length
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForSeq2SeqLM.from_pretrained(model_id).to(device).eval()
        self.true_id = self._single_token_id("true")
        self.false_id = self._single_token_id("false")

    def _single_token_id(self, word: str) -> int:
        ids = self.tokenizer.encode(word, add_special_tokens=False)
        return ids[0]

    def __call__(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        torch = self._torch
        prompts = [
            f"Query: {query} Document: {text} Relevant:" for query, text in pairs
        ]
        encoded = self.tokenizer(
            prompts,
            padding=True,
            truncation=True,
            max_length=self.max_length,
            return_tensors="pt",
        ).to(self.device)
        start = self.model.config.decoder_start_token_id
        decoder_input = torch.full(
            (len(prompts), 1), start, dtype=torch.long, device=self.device
        )
        with torch.no_grad():
            logits = self.model(
                **encoded, decoder_input_ids=decoder_input
            ).logits[:, 0, :]
        pair_logits = logits[:, [self.false_id, self.true_id]]
        probs = pair_logits.log_softmax(dim=-1).exp()
        return [float(p) for p in probs[:, 1].cpu()]
