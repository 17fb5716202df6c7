"""A small, fully deterministic multimodal model for desk-scale runs.

The model follows the standard three-module layout: a patch-based vision
tower, a two-stage MLP connector into the language embedding space, and a
causal transformer language model over a word-level vocabulary. It exposes
the capability surface the extractor hooks into:

* ``forward_trace(image, prefix_ids, suffix_ids)``: per-layer hidden
  states of every module plus the image-token span in the LM input;
* ``generate(image, prefix_ids, suffix_ids, max_new_tokens)``: greedy
  decoding;
* ``tokenizer`` / ``image_size`` attributes.

Any object with the same surface can be registered and extracted from;
``check_capabilities`` reports what a candidate exposes before extraction
starts.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import torch
from torch import nn

PAD, UNK, EOS = "<pad>", "<unk>", "<eos>"

_BASE_WORDS = (
    "carefully examine the image to determine if there is present please "
    "answer or yes no normal benign malignant covid pneumonia diagnostic "
    "result for breast cancer a an of in not healthy lesion scan finding"
).split()


class WordTokenizer:
    """Lower-cased word-level tokenizer over a fixed small vocabulary."""

    def __init__(self, extra_words: tuple[str, ...] = ()):
        words = list(dict.fromkeys(list(_BASE_WORDS) + [w.lower() for w in extra_words]))
        self.vocab = [PAD, UNK, EOS] + words
        self.index = {w: i for i, w in enumerate(self.vocab)}

    def __len__(self) -> int:
        return len(self.vocab)

    def _words(self, text: str) -> list[str]:
        return re.findall(r"[a-z0-9]+", text.lower())

    def encode(self, text: str) -> list[int]:
        return [self.index.get(w, self.index[UNK]) for w in self._words(text)]

    def decode(self, ids: list[int]) -> str:
        words = [self.vocab[i] for i in ids if self.vocab[i] not in (PAD, EOS)]
        return " ".join(words)

    def encode_prompt(self, template_text: str, placeholder: str = "<image>") -> tuple[list[int], list[int]]:
        """Token ids before and after the image placeholder."""
        if placeholder not in template_text:
            raise ValueError(f"prompt lacks the {placeholder!r} placeholder")
        before, after = template_text.split(placeholder, 1)
        return self.encode(before), self.encode(after)


class Block(nn.Module):
    """Pre-norm single-head attention + MLP residual block."""

    def __init__(self, dim: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.proj = nn.Linear(dim, dim)
        self.ln2 = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, 2 * dim)
        self.fc2 = nn.Linear(2 * dim, dim)

    def forward(self, x: torch.Tensor, causal: bool) -> torch.Tensor:
        h = self.ln1(x)
        q, k, v = self.q(h), self.k(h), self.v(h)
        scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
        if causal:
            t = x.shape[0]
            mask = torch.triu(torch.ones(t, t, dtype=torch.bool), diagonal=1)
            scores = scores.masked_fill(mask, float("-inf"))
        x = x + self.proj(torch.softmax(scores, dim=-1) @ v)
        h = self.ln2(x)
        return x + self.fc2(torch.nn.functional.gelu(self.fc1(h)))


@dataclass
class ForwardTrace:
    vision_states: list[torch.Tensor]     # per vision layer, (P, d_v)
    connector_states: list[torch.Tensor]  # intermediate then output, (P, *)
    llm_states: list[torch.Tensor]        # per LM layer, (T, d_l)
    image_span: tuple[int, int]           # [start, end) of image tokens in the LM input
    final_hidden: torch.Tensor            # (T, d_l) after the last LM layer


class ToyMultimodalModel(nn.Module):
    def __init__(
        self,
        tokenizer: WordTokenizer,
        image_size: int = 16,
        patch: int = 4,
        d_vision: int = 16,
        d_connector: int = 20,
        d_lm: int = 24,
        n_vision_layers: int = 2,
        n_llm_layers: int = 2,
        max_seq: int = 96,
    ):
        super().__init__()
        if image_size % patch != 0:
            raise ValueError("image_size must be a multiple of patch")
        self.tokenizer = tokenizer
        self.image_size = image_size
        self.patch = patch
        self.n_patches = (image_size // patch) ** 2

        self.patch_embed = nn.Linear(patch * patch, d_vision)
        self.vision_pos = nn.Parameter(torch.randn(self.n_patches, d_vision) * 0.02)
        self.vision_blocks = nn.ModuleList(Block(d_vision) for _ in range(n_vision_layers))

        self.connector_fc1 = nn.Linear(d_vision, d_connector)
        self.connector_fc2 = nn.Linear(d_connector, d_lm)

        self.token_embed = nn.Embedding(len(tokenizer), d_lm)
        self.lm_pos = nn.Parameter(torch.randn(max_seq, d_lm) * 0.02)
        self.lm_blocks = nn.ModuleList(Block(d_lm) for _ in range(n_llm_layers))
        self.lm_head = nn.Linear(d_lm, len(tokenizer))

    def _patchify(self, image: torch.Tensor) -> torch.Tensor:
        # (1, S, S) -> (P, patch*patch), rows in raster order.
        s, p = self.image_size, self.patch
        x = image.reshape(s // p, p, s // p, p).permute(0, 2, 1, 3)
        return x.reshape(self.n_patches, p * p)

    def forward_trace(
        self, image: torch.Tensor, prefix_ids: list[int], suffix_ids: list[int]
    ) -> ForwardTrace:
        x = self.patch_embed(self._patchify(image)) + self.vision_pos
        vision_states = []
        for block in self.vision_blocks:
            x = block(x, causal=False)
            vision_states.append(x)

        mid = torch.nn.functional.gelu(self.connector_fc1(x))
        out = self.connector_fc2(mid)
        connector_states = [mid, out]

        prefix = self.token_embed(torch.as_tensor(prefix_ids, dtype=torch.long))
        suffix = self.token_embed(torch.as_tensor(suffix_ids, dtype=torch.long))
        seq = torch.cat([prefix, out, suffix], dim=0)
        if seq.shape[0] > self.lm_pos.shape[0]:
            raise ValueError(f"sequence length {seq.shape[0]} exceeds max_seq")
        seq = seq + self.lm_pos[: seq.shape[0]]
        image_span = (len(prefix_ids), len(prefix_ids) + self.n_patches)

        llm_states = []
        for block in self.lm_blocks:
            seq = block(seq, causal=True)
            llm_states.append(seq)
        return ForwardTrace(vision_states, connector_states, llm_states, image_span, seq)

    @torch.no_grad()
    def generate(
        self,
        image: torch.Tensor,
        prefix_ids: list[int],
        suffix_ids: list[int],
        max_new_tokens: int = 3,
    ) -> list[int]:
        eos = self.tokenizer.index[EOS]
        generated: list[int] = []
        for _ in range(max_new_tokens):
            trace = self.forward_trace(image, prefix_ids, suffix_ids + generated)
            logits = self.lm_head(trace.final_hidden[-1])
            nxt = int(torch.argmax(logits).item())
            if nxt == eos:
                break
            generated.append(nxt)
        return generated


class CapabilityError(RuntimeError):
    """The model does not expose the surface extraction hooks into."""


REQUIRED_CAPABILITIES = ("forward_trace", "generate", "tokenizer", "image_size")


def check_capabilities(model) -> None:
    found = [c for c in REQUIRED_CAPABILITIES if hasattr(model, c)]
    missing = [c for c in REQUIRED_CAPABILITIES if not hasattr(model, c)]
    if missing:
        raise CapabilityError(
            f"unsupported architecture: found hookable surfaces {found}, missing {missing}"
        )


def build_toy_model(seed: int = 0, extra_words: tuple[str, ...] = (), **kwargs) -> ToyMultimodalModel:
    """Deterministically initialized toy model; same seed, same weights."""
    tokenizer = WordTokenizer(extra_words=extra_words)
    torch.manual_seed(seed)
    model = ToyMultimodalModel(tokenizer, **kwargs)
    model.eval()
    return model


MODEL_BUILDERS = {"toy-mm": build_toy_model}


def load_model(identifier: str, seed: int = 0, extra_words: tuple[str, ...] = ()):
    if identifier not in MODEL_BUILDERS:
        raise CapabilityError(
            f"unknown model {identifier!r}; registered models: {sorted(MODEL_BUILDERS)}"
        )
    model = MODEL_BUILDERS[identifier](seed=seed, extra_words=extra_words)
    check_capabilities(model)
    return model
