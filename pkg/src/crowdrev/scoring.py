"""Per-post defectiveness scores and their aggregation into a verdict.

Scores live on a three-level scale: -1 likely defective, 0 neutral,
+1 unlikely to be defective.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol

from crowdrev.store import PostRecord, PostType

LIKELY_DEFECTIVE = -1
NEUTRAL = 0
UNLIKELY_DEFECTIVE = 1

_WORD = re.compile(r"[a-z0-9]+(?:['\-][a-z0-9]+)*")


def base_score(post_type: PostType, score: int, s_threshold: int = 1) -> int:
    """Score from post metadata alone.

    A well-received question signals defective code; an answer is trusted
    only above the threshold. Low-scored questions stay neutral.
    """
    if post_type == PostType.QUESTION:
        return LIKELY_DEFECTIVE if score > s_threshold else NEUTRAL
    if post_type == PostType.ANSWER:
        return UNLIKELY_DEFECTIVE if score > s_threshold else LIKELY_DEFECTIVE
    return NEUTRAL


def combine_with_sentiment(base: int, s: float, neutral_band: float = 0.2) -> int:
    """Let narrative sentiment decide only when metadata is neutral."""
    if not 0 <= neutral_band < 1:
        raise ValueError(f"neutral_band must be in [0, 1), got {neutral_band}")
    if base != NEUTRAL:
        return base
    if abs(s) > neutral_band:
        return UNLIKELY_DEFECTIVE if s > 0 else LIKELY_DEFECTIVE
    return NEUTRAL


def sentiment_alpha(s: float, neutral_band: float = 0.2) -> int:
    """Three-level score from sentiment alone."""
    return combine_with_sentiment(NEUTRAL, s, neutral_band)


class SentimentProvider(Protocol):
    name: str

    def score(self, narrative: str) -> float:
        """Sentiment in [-1, 1]; 0.0 when nothing can be said."""
        ...


def _tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower().replace("’", "'"))


def read_lexicon(path: str | Path) -> dict[tuple[str, ...], int]:
    """Read ``polarity<TAB>phrase`` lines; polarity is ``+`` or ``-`` (or U+2212)."""
    entries: dict[tuple[str, ...], int] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            polarity, phrase = line.split("\t", 1)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: expected polarity<TAB>phrase") from None
        polarity = polarity.strip()
        if polarity == "+":
            sign = 1
        elif polarity in ("-", "−"):
            sign = -1
        else:
            raise ValueError(f"{path}:{lineno}: unknown polarity {polarity!r}")
        key = tuple(_tokens(phrase))
        if key:
            entries[key] = sign
    return entries


def default_lexicon_path() -> Path:
    return Path(str(resources.files("crowdrev") / "data" / "lexicon.tsv"))


class LexiconSentiment:
    """Counts lexicon phrase hits, longest phrase first, without overlap."""

    name = "lexicon"

    def __init__(self, lexicon: dict[tuple[str, ...], int] | None = None):
        if lexicon is None:
            lexicon = read_lexicon(default_lexicon_path())
        self.lexicon = lexicon
        self._by_first: dict[str, list[tuple[tuple[str, ...], int]]] = {}
        for phrase, sign in sorted(lexicon.items(), key=lambda kv: -len(kv[0])):
            self._by_first.setdefault(phrase[0], []).append((phrase, sign))

    @classmethod
    def from_file(cls, path: str | Path) -> LexiconSentiment:
        return cls(read_lexicon(path))

    def hits(self, narrative: str) -> tuple[int, int]:
        """(positive hits, negative hits)."""
        toks = _tokens(narrative)
        pos = neg = 0
        i = 0
        while i < len(toks):
            for phrase, sign in self._by_first.get(toks[i], ()):
                if tuple(toks[i : i + len(phrase)]) == phrase:
                    if sign > 0:
                        pos += 1
                    else:
                        neg += 1
                    i += len(phrase)
                    break
            else:
                i += 1
        return pos, neg

    def score(self, narrative: str) -> float:
        pos, neg = self.hits(narrative)
        return (pos - neg) / max(1, pos + neg)


_DEFAULT_PROVIDER: LexiconSentiment | None = None


def default_provider() -> LexiconSentiment:
    global _DEFAULT_PROVIDER
    if _DEFAULT_PROVIDER is None:
        _DEFAULT_PROVIDER = LexiconSentiment()
    return _DEFAULT_PROVIDER


def lexicon_sentiment(narrative: str) -> float:
    return default_provider().score(narrative)


def score_post(
    post: PostRecord,
    s_threshold: int = 1,
    neutral_band: float = 0.2,
    provider: SentimentProvider | None = None,
) -> int:
    """Defectiveness score for the code found in ``post``."""
    provider = provider or default_provider()
    alpha = base_score(post.post_type, post.score, s_threshold)
    return combine_with_sentiment(alpha, provider.score(post.narrative), neutral_band)


@dataclass
class AggregationState:
    weighted_sum: float = 0.0
    total_weight: float = 0.0
    n_posts: int = 0


def aggregate_init() -> AggregationState:
    return AggregationState()


def aggregate_add(
    st: AggregationState, alpha_p: int, weight: float, multiplier: float = 1.0
) -> AggregationState:
    """Fold one matched post in. ``weight`` is the match degree as a fraction;
    ``multiplier`` carries optional extra weighting such as view counts."""
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must be in [0, 1], got {weight}")
    if multiplier < 0:
        raise ValueError(f"multiplier must be >= 0, got {multiplier}")
    if alpha_p not in (-1, 0, 1):
        raise ValueError(f"alpha_p must be -1, 0 or 1, got {alpha_p}")
    wt = weight * multiplier
    st.weighted_sum += alpha_p * wt
    st.total_weight += wt
    st.n_posts += 1
    return st


def aggregate_final(st: AggregationState, eps: float = 1e-12) -> int:
    """Sign of the weighted sum; ties and empty states are neutral."""
    if st.total_weight <= 0 or abs(st.weighted_sum) <= eps * st.total_weight:
        return NEUTRAL
    return UNLIKELY_DEFECTIVE if st.weighted_sum > 0 else LIKELY_DEFECTIVE


def view_count_multiplier(view_count: int) -> float:
    return math.log10(1 + max(0, view_count))
