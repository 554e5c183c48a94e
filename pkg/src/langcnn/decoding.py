"""Caption decoding: greedy, beam search, and an exhaustive oracle.

All decoders emit well-formed <START> ... <END> sequences with at most
``max_len`` interior tokens; when a hypothesis reaches the interior cap,
the <END> transition is taken (and scored) regardless of its rank, so the
three decoders search exactly the same sequence space. Scores are
cumulative log-probabilities from t=1 on; the forced t=0 <START>
prediction is a per-image constant and is excluded. No length
normalization is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import data
from .autograd import log_softmax, no_grad
from .model import CaptionerModel, step

DEFAULT_MAX_LEN = 16
EXHAUSTIVE_GUARD = 10**6


@dataclass
class BeamHypothesis:
    tokens: list[int]
    logp: float
    state: list = field(repr=False, default_factory=list)
    finished: bool = False

    def sort_key(self):
        # Higher score first; ties fall to the lexicographically smaller
        # token sequence.
        return (-self.logp, self.tokens)


class _Session:
    """Shared per-image decoding state: eval mode, no recording."""

    def __init__(self, model: CaptionerModel, features: np.ndarray, max_len: int):
        if max_len < 0:
            raise ValueError(f"max_len must be >= 0, got {max_len}")
        self.model = model
        self.features = features
        self.max_len = max_len
        self.was_training = model.training
        model.training = False

    def close(self):
        self.model.training = self.was_training

    def advance(self, tokens: list[int], state):
        logits, new_state = step(self.model, tokens, self.features, state)
        return log_softmax(logits.data), new_state

    def start(self) -> BeamHypothesis:
        # The t=0 prediction is forced to <START> and not scored.
        _, state = self.advance([], self.model.initial_state())
        return BeamHypothesis([data.START], 0.0, state)


def greedy_decode(
    model: CaptionerModel, features: np.ndarray, max_len: int = DEFAULT_MAX_LEN
) -> list[int]:
    """Argmax token per step; ties resolve to the lowest index."""
    hyp = greedy_decode_scored(model, features, max_len)
    return hyp.tokens


def greedy_decode_scored(
    model: CaptionerModel, features: np.ndarray, max_len: int = DEFAULT_MAX_LEN
) -> BeamHypothesis:
    session = _Session(model, features, max_len)
    try:
        with no_grad():
            hyp = session.start()
            while True:
                logprobs, state = session.advance(hyp.tokens, hyp.state)
                interior = len(hyp.tokens) - 1
                if interior >= max_len:
                    tok = data.END
                else:
                    tok = int(np.argmax(logprobs))
                hyp = BeamHypothesis(
                    hyp.tokens + [tok], hyp.logp + float(logprobs[tok]), state
                )
                if tok == data.END:
                    hyp.finished = True
                    return hyp
    finally:
        session.close()


def beam_search(
    model: CaptionerModel,
    features: np.ndarray,
    k: int = 2,
    max_len: int = DEFAULT_MAX_LEN,
) -> list[BeamHypothesis]:
    """Width-k beam search with retirement.

    Finished hypotheses leave the live beam and shrink it; the completed
    set is returned sorted by score (descending), ties by token sequence.
    """
    if k < 1:
        raise ValueError(f"beam width must be >= 1, got {k}")
    vocab_size = model.config.vocab_size
    session = _Session(model, features, max_len)
    try:
        with no_grad():
            live = [session.start()]
            completed: list[BeamHypothesis] = []
            while live and len(completed) < k:
                candidates: list[BeamHypothesis] = []
                for hyp in live:
                    logprobs, state = session.advance(hyp.tokens, hyp.state)
                    interior = len(hyp.tokens) - 1
                    if interior >= max_len:
                        candidates.append(
                            BeamHypothesis(
                                hyp.tokens + [data.END],
                                hyp.logp + float(logprobs[data.END]),
                                state,
                                finished=True,
                            )
                        )
                        continue
                    for tok in range(vocab_size):
                        candidates.append(
                            BeamHypothesis(
                                hyp.tokens + [tok],
                                hyp.logp + float(logprobs[tok]),
                                state,
                                finished=tok == data.END,
                            )
                        )
                candidates.sort(key=BeamHypothesis.sort_key)
                selected = candidates[: k - len(completed)]
                live = []
                for hyp in selected:
                    (completed if hyp.finished else live).append(hyp)
            completed.sort(key=BeamHypothesis.sort_key)
            return completed
    finally:
        session.close()


def exhaustive_decode(
    model: CaptionerModel,
    features: np.ndarray,
    max_len: int = DEFAULT_MAX_LEN,
    guard: int = EXHAUSTIVE_GUARD,
) -> BeamHypothesis:
    """Best <END>-terminated sequence by full enumeration.

    Refuses to run when vocab_size ** max_len exceeds ``guard``.
    """
    vocab_size = model.config.vocab_size
    if vocab_size ** max(max_len, 1) > guard:
        raise ValueError(
            f"exhaustive search over {vocab_size}^{max_len} sequences exceeds "
            f"the guard of {guard}"
        )
    session = _Session(model, features, max_len)
    best: BeamHypothesis | None = None

    def consider(candidate: BeamHypothesis):
        nonlocal best
        if (
            best is None
            or candidate.logp > best.logp
            or (candidate.logp == best.logp and candidate.tokens < best.tokens)
        ):
            best = candidate

    try:
        with no_grad():
            stack = [session.start()]
            while stack:
                hyp = stack.pop()
                logprobs, state = session.advance(hyp.tokens, hyp.state)
                consider(
                    BeamHypothesis(
                        hyp.tokens + [data.END],
                        hyp.logp + float(logprobs[data.END]),
                        finished=True,
                    )
                )
                if len(hyp.tokens) - 1 < max_len:
                    for tok in range(vocab_size):
                        if tok == data.END:
                            continue
                        stack.append(
                            BeamHypothesis(
                                hyp.tokens + [tok],
                                hyp.logp + float(logprobs[tok]),
                                state,
                            )
                        )
            assert best is not None
            return best
    finally:
        session.close()


def score_sequence(
    model: CaptionerModel, features: np.ndarray, tokens: list[int]
) -> float:
    """Cumulative log-probability of a <START> ... <END> sequence (t >= 1)."""
    if len(tokens) < 2 or tokens[0] != data.START or tokens[-1] != data.END:
        raise ValueError("sequences must run <START> ... <END>")
    session = _Session(model, features, max_len=len(tokens))
    try:
        with no_grad():
            state = session.start().state
            total = 0.0
            for t in range(1, len(tokens)):
                logprobs, state = session.advance(tokens[:t], state)
                total = total + float(logprobs[tokens[t]])
            return total
    finally:
        session.close()
