"""Corpus statistics over caption shards: lengths, n-grams, POS type counts.

Two definitions of "unique items per sample" are reported side by side,
because they differ and both are useful:

- distinct_*: item types that occur within the sample itself;
- novel_*:    item types that occur in this sample and in no other sample
              of the measured subset.

POS tagging is intentionally crude: a bundled lexicon tagger with fixed
word-shape fallback rules. Reports record the segmenter and tagger ids, so
numbers are only comparable within one tagger.
"""

from __future__ import annotations

import hashlib
import heapq
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .corpus import DatasetManifest, iter_jsonl, resolve_shard_path

TAGSET = ("NOUN", "VERB", "ADJ", "OTHER")


class StatsError(Exception):
    pass


class Segmenter(Protocol):
    language: str
    segmenter_id: str

    def segment(self, text: str) -> list[str]: ...


class PosTagger(Protocol):
    language: str
    tagger_id: str

    def tag(self, tokens: Sequence[str]) -> list[str]: ...


_EN_WORD_RE = re.compile(r"\w+", re.UNICODE)


class EnglishSegmenter:
    """Unicode word boundaries, lowercased, punctuation dropped."""

    language = "EN"
    segmenter_id = "unicode-en-v1"

    def segment(self, text: str) -> list[str]:
        return _EN_WORD_RE.findall(text.lower())


def _is_cjk_word_char(ch: str) -> bool:
    if ch.isspace():
        return False
    return not unicodedata.category(ch).startswith("P")


class ChineseSegmenter:
    """Greedy longest-match against a lexicon, single-character fallback."""

    language = "CN"
    segmenter_id = "greedy-cn-v1"

    def __init__(self, lexicon: Iterable[str] | None = None):
        words = set(lexicon) if lexicon is not None else set(_load_cn_lexicon())
        self._words = words
        self._max_len = max((len(w) for w in words), default=1)

    def segment(self, text: str) -> list[str]:
        tokens: list[str] = []
        i, n = 0, len(text)
        while i < n:
            ch = text[i]
            if not _is_cjk_word_char(ch):
                i += 1
                continue
            match = None
            for length in range(min(self._max_len, n - i), 1, -1):
                cand = text[i : i + length]
                if cand in self._words:
                    match = cand
                    break
            if match is None:
                match = ch
            tokens.append(match)
            i += len(match)
        return tokens


def _read_wordlist(name: str) -> list[str]:
    text = resources.files("caplab.lexicons").joinpath(name).read_text(encoding="utf-8")
    words = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.append(line)
    return words


def _load_cn_lexicon() -> dict[str, str]:
    text = resources.files("caplab.lexicons").joinpath("cn_lexicon.tsv").read_text(
        encoding="utf-8"
    )
    lex: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        word, tag = line.split("\t")
        lex[word] = tag
    return lex


def _plural(noun: str) -> str:
    if re.search(r"[^aeiou]y$", noun):
        return noun[:-1] + "ies"
    if re.search(r"(s|x|z|ch|sh)$", noun):
        return noun + "es"
    return noun + "s"


def _verb_forms(verb: str) -> list[str]:
    forms = [_plural(verb)]
    if verb.endswith("e") and not verb.endswith("ee"):
        forms += [verb[:-1] + "ing", verb + "d"]
    elif re.search(r"[^aeiou]y$", verb):
        forms += [verb + "ing", verb[:-1] + "ied"]
    else:
        forms += [verb + "ing", verb + "ed"]
    return forms


_ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "ish", "less")
_NOUN_SUFFIXES = ("tion", "sion", "ness", "ment", "ity", "ship", "hood")


class EnglishLexiconTagger:
    """Word-list lookup with inflection expansion and suffix fallback."""

    language = "EN"
    tagger_id = "lexicon-en-v1"
    tagset = TAGSET

    def __init__(self):
        lex: dict[str, str] = {}
        for noun in _read_wordlist("en_nouns.txt"):
            lex.setdefault(noun, "NOUN")
            lex.setdefault(_plural(noun), "NOUN")
        for verb in _read_wordlist("en_verbs.txt"):
            lex.setdefault(verb, "VERB")
            for form in _verb_forms(verb):
                lex.setdefault(form, "VERB")
        for adj in _read_wordlist("en_adjs.txt"):
            lex[adj] = "ADJ"
        for other in _read_wordlist("en_other.txt"):
            lex[other] = "OTHER"
        self._lex = lex

    def __len__(self) -> int:
        return len(self._lex)

    def tag_word(self, token: str) -> str:
        tag = self._lex.get(token)
        if tag is not None:
            return tag
        if token.endswith("ing") or token.endswith("ed"):
            return "VERB"
        if token.endswith(_ADJ_SUFFIXES):
            return "ADJ"
        if token.endswith(_NOUN_SUFFIXES):
            return "NOUN"
        return "OTHER"

    def tag(self, tokens: Sequence[str]) -> list[str]:
        return [self.tag_word(t) for t in tokens]


class ChineseLexiconTagger:
    language = "CN"
    tagger_id = "lexicon-cn-v1"
    tagset = TAGSET

    def __init__(self):
        self._lex = _load_cn_lexicon()

    def tag(self, tokens: Sequence[str]) -> list[str]:
        return [self._lex.get(t, "OTHER") for t in tokens]


_DEFAULT_SEGMENTERS: dict[str, Segmenter] = {}
_DEFAULT_TAGGERS: dict[str, PosTagger] = {}


def default_segmenter(language: str) -> Segmenter:
    if language not in _DEFAULT_SEGMENTERS:
        if language == "EN":
            _DEFAULT_SEGMENTERS[language] = EnglishSegmenter()
        elif language == "CN":
            _DEFAULT_SEGMENTERS[language] = ChineseSegmenter()
        else:
            raise StatsError(f"no segmenter for language {language!r}")
    return _DEFAULT_SEGMENTERS[language]


def default_tagger(language: str) -> PosTagger:
    if language not in _DEFAULT_TAGGERS:
        if language == "EN":
            _DEFAULT_TAGGERS[language] = EnglishLexiconTagger()
        elif language == "CN":
            _DEFAULT_TAGGERS[language] = ChineseLexiconTagger()
        else:
            raise StatsError(f"no tagger for language {language!r}")
    return _DEFAULT_TAGGERS[language]


def segment(text: str, language: str, segmenter: Segmenter | None = None) -> list[str]:
    seg = segmenter or default_segmenter(language)
    return seg.segment(text)


def ngram_stats(tokens: Sequence[str], n: int) -> int:
    """Count distinct contiguous n-token windows."""
    if n < 1:
        raise StatsError(f"n must be >= 1, got {n}")
    if n > len(tokens):
        return 0
    return len({tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)})


@dataclass(frozen=True)
class SampleStats:
    token_count: int
    distinct_2grams: int
    distinct_3grams: int
    distinct_nouns: int
    distinct_verbs: int
    distinct_adjs: int

    def __post_init__(self):
        for k, v in (("2", self.distinct_2grams), ("3", self.distinct_3grams)):
            bound = max(0, self.token_count - int(k) + 1)
            if v > bound:
                raise ValueError(f"distinct_{k}grams {v} exceeds bound {bound}")
        for v in (self.distinct_nouns, self.distinct_verbs, self.distinct_adjs):
            if v > self.token_count:
                raise ValueError("POS type count exceeds token_count")


def _tagged_type_sets(tokens: Sequence[str], tags: Sequence[str]):
    by_tag: dict[str, set[str]] = {"NOUN": set(), "VERB": set(), "ADJ": set()}
    for token, tag in zip(tokens, tags):
        if tag in by_tag:
            by_tag[tag].add(token)
    return by_tag


def sample_stats(
    caption_text: str,
    language: str,
    segmenter: Segmenter | None = None,
    tagger: PosTagger | None = None,
) -> SampleStats:
    tokens = segment(caption_text, language, segmenter)
    tags = (tagger or default_tagger(language)).tag(tokens)
    if len(tags) != len(tokens):
        raise StatsError("tagger must return exactly one tag per token")
    by_tag = _tagged_type_sets(tokens, tags)
    return SampleStats(
        token_count=len(tokens),
        distinct_2grams=ngram_stats(tokens, 2),
        distinct_3grams=ngram_stats(tokens, 3),
        distinct_nouns=len(by_tag["NOUN"]),
        distinct_verbs=len(by_tag["VERB"]),
        distinct_adjs=len(by_tag["ADJ"]),
    )


_STAT_FIELDS = (
    "token_count",
    "distinct_2grams",
    "distinct_3grams",
    "distinct_nouns",
    "distinct_verbs",
    "distinct_adjs",
)


@dataclass
class StatsAccumulator:
    """Exact integer sums; merging is associative and commutative."""

    sample_count: int = 0
    sums: tuple[int, ...] = (0,) * len(_STAT_FIELDS)

    def add(self, stats: SampleStats) -> None:
        self.sample_count += 1
        self.sums = tuple(
            s + getattr(stats, f) for s, f in zip(self.sums, _STAT_FIELDS)
        )

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        return StatsAccumulator(
            sample_count=self.sample_count + other.sample_count,
            sums=tuple(a + b for a, b in zip(self.sums, other.sums)),
        )

    def means(self) -> dict[str, float]:
        if self.sample_count == 0:
            raise StatsError("no samples accumulated")
        return {f: s / self.sample_count for f, s in zip(_STAT_FIELDS, self.sums)}


@dataclass(frozen=True)
class CorpusStatsReport:
    dataset_id: str
    sample_count: int
    subset_size: int
    seed: int
    language: str
    segmenter_id: str
    tagger_id: str
    avg_len: float
    mean_distinct_2grams: float
    mean_distinct_3grams: float
    mean_distinct_nouns: float
    mean_distinct_verbs: float
    mean_distinct_adjs: float
    mean_novel_2grams: float
    mean_novel_3grams: float
    mean_novel_nouns: float
    mean_novel_verbs: float
    mean_novel_adjs: float

    def to_json_obj(self) -> dict:
        return dict(self.__dict__)


def _subset_key(seed: int, sample_id: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{sample_id}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


def extract_text(obj: dict) -> str:
    return obj.get("caption_text") or obj.get("alt_text") or ""


def select_subset(
    manifest: DatasetManifest,
    root: str | Path,
    subset_size: int | None,
    seed: int,
) -> list[tuple[str, str]]:
    """Pick a deterministic subset of (sample_id, text), streaming all shards.

    Selection keeps the subset_size smallest keyed hashes of sample ids, so
    the result is independent of shard order and needs memory proportional
    to the subset, not the corpus.
    """
    total = 0
    heap: list[tuple[int, str, str]] = []  # max-heap via negated key
    passthrough: list[tuple[str, str]] = []
    for shard in manifest.shards:
        for obj in iter_jsonl(resolve_shard_path(root, shard)):
            total += 1
            sample_id = str(obj.get("sample_id", total))
            text = extract_text(obj)
            if subset_size is None:
                passthrough.append((sample_id, text))
                continue
            key = _subset_key(seed, sample_id)
            entry = (-key, sample_id, text)
            if len(heap) < subset_size:
                heapq.heappush(heap, entry)
            elif entry > heap[0]:
                heapq.heapreplace(heap, entry)
    if total == 0:
        raise StatsError("dataset is empty")
    if subset_size is None:
        return passthrough
    if subset_size > total:
        raise StatsError(f"subset_size {subset_size} exceeds total samples {total}")
    chosen = sorted(heap, reverse=True)  # ascending key order
    return [(sample_id, text) for _, sample_id, text in chosen]


def _item_sets(tokens: Sequence[str], tags: Sequence[str]) -> dict[str, set]:
    by_tag = _tagged_type_sets(tokens, tags)
    return {
        "2grams": {tuple(tokens[i : i + 2]) for i in range(len(tokens) - 1)},
        "3grams": {tuple(tokens[i : i + 3]) for i in range(len(tokens) - 2)},
        "nouns": by_tag["NOUN"],
        "verbs": by_tag["VERB"],
        "adjs": by_tag["ADJ"],
    }


_NOVEL_FAMILIES = ("2grams", "3grams", "nouns", "verbs", "adjs")


def corpus_stats(
    manifest: DatasetManifest,
    root: str | Path,
    subset_size: int | None = None,
    seed: int = 0,
    language: str = "EN",
    segmenter: Segmenter | None = None,
    tagger: PosTagger | None = None,
) -> CorpusStatsReport:
    """Compute per-sample means over a deterministic subset of the dataset."""
    seg = segmenter or default_segmenter(language)
    tg = tagger or default_tagger(language)
    selected = select_subset(manifest, root, subset_size, seed)

    acc = StatsAccumulator()
    families: list[dict[str, set]] = []
    for _, text in selected:
        tokens = seg.segment(text)
        tags = tg.tag(tokens)
        by_tag = _tagged_type_sets(tokens, tags)
        acc.add(
            SampleStats(
                token_count=len(tokens),
                distinct_2grams=ngram_stats(tokens, 2),
                distinct_3grams=ngram_stats(tokens, 3),
                distinct_nouns=len(by_tag["NOUN"]),
                distinct_verbs=len(by_tag["VERB"]),
                distinct_adjs=len(by_tag["ADJ"]),
            )
        )
        families.append(_item_sets(tokens, tags))

    doc_freq: dict[str, Counter] = {fam: Counter() for fam in _NOVEL_FAMILIES}
    for sets in families:
        for fam in _NOVEL_FAMILIES:
            doc_freq[fam].update(sets[fam])
    novel_sums = {fam: 0 for fam in _NOVEL_FAMILIES}
    for sets in families:
        for fam in _NOVEL_FAMILIES:
            novel_sums[fam] += sum(1 for item in sets[fam] if doc_freq[fam][item] == 1)

    n = acc.sample_count
    means = acc.means()
    return CorpusStatsReport(
        dataset_id=manifest.dataset_id,
        sample_count=n,
        subset_size=subset_size if subset_size is not None else n,
        seed=seed,
        language=language,
        segmenter_id=seg.segmenter_id,
        tagger_id=tg.tagger_id,
        avg_len=means["token_count"],
        mean_distinct_2grams=means["distinct_2grams"],
        mean_distinct_3grams=means["distinct_3grams"],
        mean_distinct_nouns=means["distinct_nouns"],
        mean_distinct_verbs=means["distinct_verbs"],
        mean_distinct_adjs=means["distinct_adjs"],
        mean_novel_2grams=novel_sums["2grams"] / n,
        mean_novel_3grams=novel_sums["3grams"] / n,
        mean_novel_nouns=novel_sums["nouns"] / n,
        mean_novel_verbs=novel_sums["verbs"] / n,
        mean_novel_adjs=novel_sums["adjs"] / n,
    )
