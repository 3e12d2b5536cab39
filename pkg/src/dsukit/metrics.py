"""Transcript and translation scoring: WER, BLEU, paired bootstrap.

The English normalizer implements basic-normalizer semantics: lowercase,
drop bracketed/parenthesized spans, map Unicode punctuation and symbols to
space except apostrophes inside words, collapse whitespace. Full
Whisper-style normalization (number spelling, spelling-variant mappings,
contraction expansion) is intentionally not reproduced; results can differ
from pipelines that apply it.

BLEU uses the default whitespace-plus-punctuation tokenizer below, not a
subword segmentation; the tokenizer argument accepts any callable for
parity runs against subword-based scores.
"""

from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import ConfigError, NumericError, ValidationError
from .seeding import rng_for

_BRACKET_SPANS = re.compile(r"\([^)]*\)|\[[^\]]*\]")
_APOSTROPHES = ("'", "’")
_WORD_OR_PUNCT = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass
class EvalPair:
    reference: str
    hypothesis: str


@dataclass
class BootstrapResult:
    """Outcome of one paired-bootstrap comparison."""

    score_a: float
    score_b: float
    wins_a: int
    wins_b: int
    ties: int
    n_resamples: int
    alpha: float
    verdict: str  # "sys_a" | "sys_b" | "not_significant"


@dataclass
class SignificanceSummary:
    """Aggregate verdict counts over a batch of comparisons."""

    n_sys_a_better: int = 0
    n_sys_b_better: int = 0
    n_not_significant: int = 0
    alpha: float = 0.05

    def add(self, result: BootstrapResult) -> None:
        if result.verdict == "sys_a":
            self.n_sys_a_better += 1
        elif result.verdict == "sys_b":
            self.n_sys_b_better += 1
        else:
            self.n_not_significant += 1


def normalize_english(text: str) -> str:
    """Lowercase, strip (…) and […] spans, replace punctuation/symbols with
    space keeping intra-word apostrophes, collapse whitespace."""
    text = _BRACKET_SPANS.sub(" ", text.lower())
    out: list[str] = []
    for pos, ch in enumerate(text):
        cat = unicodedata.category(ch)
        if cat[0] in ("P", "S"):
            if ch in _APOSTROPHES:
                prev_ok = pos > 0 and text[pos - 1].isalnum()
                next_ok = pos + 1 < len(text) and text[pos + 1].isalnum()
                if prev_ok and next_ok:
                    out.append(ch)
                    continue
            out.append(" ")
        else:
            out.append(ch)
    return " ".join("".join(out).split())


def edit_distance(ref_words: Sequence[str], hyp_words: Sequence[str]) -> int:
    """Word-level Levenshtein distance with unit costs."""
    if len(ref_words) < len(hyp_words):
        ref_words, hyp_words = hyp_words, ref_words
    prev = list(range(len(hyp_words) + 1))
    for i, ref_w in enumerate(ref_words, start=1):
        cur = [i] + [0] * len(hyp_words)
        for j, hyp_w in enumerate(hyp_words, start=1):
            cost = 0 if ref_w == hyp_w else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return prev[-1]


def wer(pairs: Sequence[EvalPair]) -> float:
    """Corpus-level word error rate: total edit operations over total
    reference words, both sides normalized first."""
    total_edits = 0
    total_ref_words = 0
    for pair in pairs:
        ref_words = normalize_english(pair.reference).split()
        hyp_words = normalize_english(pair.hypothesis).split()
        total_edits += edit_distance(ref_words, hyp_words)
        total_ref_words += len(ref_words)
    if total_ref_words == 0:
        raise NumericError("WER undefined: zero reference words after normalization")
    return total_edits / total_ref_words


def default_bleu_tokenizer(text: str) -> list[str]:
    """Whitespace plus punctuation splitting (each punctuation mark is its
    own token)."""
    return _WORD_OR_PUNCT.findall(text)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    refs: Sequence[str],
    hyps: Sequence[str],
    max_n: int = 4,
    smoothing: str = "exp",
    tokenizer: Callable[[str], list[str]] | None = None,
) -> float:
    """Corpus BLEU in [0, 100]: geometric mean of modified n-gram
    precisions times the brevity penalty.

    smoothing="exp" applies the standard exponential zero-count smoothing:
    the first zero-matched order n gets precision 1/(2*total_n), the next
    1/(4*total_n), and so on. smoothing="none" returns 0.0 on any zero
    precision.

    Orders with no hypothesis n-grams at all (every hypothesis shorter
    than n) are excluded from the geometric mean rather than zeroing it,
    so identical corpora score 100 regardless of sentence length.
    """
    if len(refs) != len(hyps):
        raise ValidationError(f"{len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise ValidationError("empty corpus")
    if max_n < 1:
        raise ValidationError(f"max_n must be >= 1, got {max_n}")
    if smoothing not in ("exp", "none"):
        raise ConfigError(f"unknown smoothing {smoothing!r}, expected 'exp' or 'none'")
    tok = tokenizer or default_bleu_tokenizer

    matched = [0] * max_n
    totals = [0] * max_n
    ref_len = 0
    hyp_len = 0
    for ref_text, hyp_text in zip(refs, hyps):
        ref_tokens = tok(ref_text)
        hyp_tokens = tok(hyp_text)
        ref_len += len(ref_tokens)
        hyp_len += len(hyp_tokens)
        for n in range(1, max_n + 1):
            hyp_grams = _ngrams(hyp_tokens, n)
            ref_grams = _ngrams(ref_tokens, n)
            totals[n - 1] += sum(hyp_grams.values())
            matched[n - 1] += sum(
                min(count, ref_grams[gram]) for gram, count in hyp_grams.items()
            )

    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    smooth = 1.0
    orders = 0
    for n in range(max_n):
        if totals[n] == 0:
            break  # totals are non-increasing in n: the rest are 0 too
        orders += 1
        if matched[n] > 0:
            precision = matched[n] / totals[n]
        elif smoothing == "exp":
            smooth *= 2.0
            precision = 1.0 / (smooth * totals[n])
        else:
            return 0.0
        log_sum += math.log(precision)
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_sum / orders)


def bleu_score_fn(refs: Sequence[str], hyps: Sequence[str]) -> float:
    """BLEU adapter with the paired_bootstrap scores_fn signature."""
    return bleu(refs, hyps)


def paired_bootstrap(
    scores_fn: Callable[[Sequence[str], Sequence[str]], float],
    sys_a_hyps: Sequence[str],
    sys_b_hyps: Sequence[str],
    refs: Sequence[str],
    n_resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> BootstrapResult:
    """Paired bootstrap resampling: a system is declared better when it
    wins at least (1 - alpha) of the resampled comparisons.

    Each resample draws its index vector from a seed derived from the
    master seed and the resample number, so resamples can be evaluated in
    parallel without changing results.
    """
    if n_resamples < 100:
        raise ConfigError(
            f"n_resamples must be >= 100 for a stable estimate, got {n_resamples}"
        )
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    if not (len(sys_a_hyps) == len(sys_b_hyps) == len(refs)):
        raise ValidationError(
            f"corpora must align: |A|={len(sys_a_hyps)}, |B|={len(sys_b_hyps)}, "
            f"|refs|={len(refs)}"
        )
    if not refs:
        raise ValidationError("empty corpus")

    n = len(refs)
    wins_a = wins_b = ties = 0
    for resample in range(n_resamples):
        idx = rng_for(seed, "bootstrap", resample).integers(0, n, size=n)
        sampled_refs = [refs[i] for i in idx]
        score_a = scores_fn(sampled_refs, [sys_a_hyps[i] for i in idx])
        score_b = scores_fn(sampled_refs, [sys_b_hyps[i] for i in idx])
        if score_a > score_b:
            wins_a += 1
        elif score_b > score_a:
            wins_b += 1
        else:
            ties += 1

    need = (1.0 - alpha) * n_resamples
    if wins_a >= need:
        verdict = "sys_a"
    elif wins_b >= need:
        verdict = "sys_b"
    else:
        verdict = "not_significant"
    return BootstrapResult(
        score_a=scores_fn(refs, list(sys_a_hyps)),
        score_b=scores_fn(refs, list(sys_b_hyps)),
        wins_a=wins_a,
        wins_b=wins_b,
        ties=ties,
        n_resamples=n_resamples,
        alpha=alpha,
        verdict=verdict,
    )
