"""Deterministic synthetic corpus generation.

Every utterance is a chain of time slots; each slot holds one dominant
arc (a filler word or a planted keyword) plus, when confusion noise is
requested, parallel competitor arcs that soak up a fixed share of the
posterior mass. Mixing weights live in the LM scores so the resulting
arc posteriors do not depend on the acoustic scale. All randomness flows
from the single seed.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .lattice import (
    KeywordLexicon,
    Lattice,
    LatticeArc,
    LatticeNode,
    PhoneSet,
    ReferenceOccurrence,
    trim_lattice,
    validate_lattice,
)


@dataclass(frozen=True)
class KeywordPlant:
    """A keyword to generate and plant `occurrences` times; pronunciation
    is drawn at random unless given explicitly."""

    kwid: str
    occurrences: int
    pronunciation: tuple[int, ...] | None = None


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    num_utterances: int = 10
    frames_per_utterance: int = 500
    num_phones: int = 20
    keywords: tuple[KeywordPlant, ...] = ()
    confusion_noise: float = 0.0
    branching: int = 3
    frame_shift: float = 0.01
    min_phone_len: int = 3
    max_phone_len: int = 8

    def __post_init__(self):
        if not 0 <= self.confusion_noise < 1:
            raise ValueError(f"confusion_noise must be in [0, 1), got {self.confusion_noise}")
        if self.branching < 1:
            raise ValueError(f"branching must be >= 1, got {self.branching}")
        if self.num_phones < 2:
            raise ValueError("need at least 2 phones")
        if self.num_utterances < 1 or self.frames_per_utterance < 20:
            raise ValueError("corpus too small to generate")


class GeneratedCorpus(NamedTuple):
    phones: PhoneSet
    lattices: list[Lattice]
    lexicon: KeywordLexicon
    refs: list[ReferenceOccurrence]

    @property
    def total_speech_seconds(self) -> float:
        return sum(lat.duration_seconds for lat in self.lattices)


def default_plants(num_keywords: int, occurrences: int = 3) -> tuple[KeywordPlant, ...]:
    return tuple(KeywordPlant(f"KW{i + 1:03d}", occurrences) for i in range(num_keywords))


def _random_alignment(rng: np.random.Generator, span: int, num_phones: int, silence_id: int) -> tuple[tuple[int, int], ...]:
    """Random phones with random durations summing exactly to span."""
    max_parts = max(1, span // 2)
    parts = int(rng.integers(1, min(4, max_parts) + 1))
    cuts = np.sort(rng.choice(np.arange(1, span), size=parts - 1, replace=False)) if parts > 1 else np.array([], dtype=int)
    bounds = np.concatenate(([0], cuts, [span]))
    out = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        phone = int(rng.integers(0, num_phones))
        out.append((phone, int(b - a)))
    return tuple(out)


def _keyword_alignment(rng: np.random.Generator, pron: tuple[int, ...], min_len: int, max_len: int) -> tuple[tuple[int, int], ...]:
    durs = rng.integers(min_len, max_len + 1, size=len(pron))
    return tuple((p, int(d)) for p, d in zip(pron, durs))


def gen_corpus(cfg: GenConfig) -> GeneratedCorpus:
    """Generate phone set, lexicon, lattices and the reference list.

    Deterministic for a fixed config. Planted keyword occurrences appear
    as dominant arcs carrying 1 - confusion_noise of the posterior mass;
    their exact times go into the references.
    """
    rng = np.random.default_rng(cfg.seed)
    labels = ["SIL"] + [f"p{i:02d}" for i in range(1, cfg.num_phones)]
    phones = PhoneSet(tuple(labels), 0)

    entries: dict[str, tuple[tuple[int, ...], ...]] = {}
    forms: dict[str, str] = {}
    seen_prons: set[tuple[int, ...]] = set()
    for plant in cfg.keywords:
        if plant.pronunciation is not None:
            pron = tuple(plant.pronunciation)
            if any(not 0 <= p < cfg.num_phones for p in pron):
                raise ValueError(f"{plant.kwid}: keyword phones outside the generated phone set")
        else:
            while True:
                length = int(rng.integers(4, 7))
                pron = tuple(int(p) for p in rng.integers(1, cfg.num_phones, size=length))
                if pron not in seen_prons:
                    break
        seen_prons.add(pron)
        entries[plant.kwid] = (pron,)
        forms[plant.kwid] = plant.kwid.lower()
    lexicon = KeywordLexicon(entries, forms)

    # assign each planted occurrence to an utterance
    plants_per_utt: list[list[str]] = [[] for _ in range(cfg.num_utterances)]
    for plant in cfg.keywords:
        for _ in range(plant.occurrences):
            plants_per_utt[int(rng.integers(0, cfg.num_utterances))].append(plant.kwid)

    lattices: list[Lattice] = []
    refs: list[ReferenceOccurrence] = []
    n_comp = cfg.branching - 1 if cfg.confusion_noise > 0 else 0
    lm_main = math.log1p(-cfg.confusion_noise) if n_comp else 0.0
    lm_alt = math.log(cfg.confusion_noise / n_comp) if n_comp else 0.0

    for u in range(cfg.num_utterances):
        utt_id = f"utt{u:04d}"
        total = cfg.frames_per_utterance
        segments: list[tuple[str, tuple[tuple[int, int], ...]]] = []  # (word, alignment)
        frame = 0
        plant_events: list[tuple[int, int, str]] = []  # (start, span, kwid)
        for kwid in plants_per_utt[u]:
            align = _keyword_alignment(rng, lexicon.entries[kwid][0], cfg.min_phone_len, cfg.max_phone_len)
            span = sum(d for _, d in align)
            gap = int(rng.integers(5, 31))
            needed = gap + span + 5  # keep room for a closing filler
            if frame + needed > total:
                raise ValueError(
                    f"{utt_id}: planted keywords do not fit in {total} frames; "
                    "raise frames_per_utterance or lower occurrences"
                )
            segments.append(("_f", _random_alignment(rng, gap, cfg.num_phones, 0)))
            plant_events.append((frame + gap, span, kwid))
            segments.append((kwid.lower(), align))
            frame += gap + span
        while frame < total:
            span = int(min(rng.integers(8, 25), total - frame))
            if total - frame - span < 8:
                span = total - frame
            segments.append(("_f", _random_alignment(rng, span, cfg.num_phones, 0)))
            frame += span

        nodes = [LatticeNode(0, 0)]
        arcs = []
        frame = 0
        for i, (word, align) in enumerate(segments):
            span = sum(d for _, d in align)
            nodes.append(LatticeNode(i + 1, frame + span))
            arcs.append(LatticeArc(i, i + 1, word, lm_main, 0.0, align))
            for _ in range(n_comp):
                arcs.append(
                    LatticeArc(i, i + 1, "_alt", lm_alt, 0.0, _random_alignment(rng, span, cfg.num_phones, 0))
                )
            frame += span
        lat = Lattice(utt_id, cfg.frame_shift, total, tuple(nodes), tuple(arcs))
        validate_lattice(lat, phones, connectivity=False)
        lat = trim_lattice(lat)
        validate_lattice(lat, phones)
        lattices.append(lat)
        for start, span, kwid in plant_events:
            refs.append(
                ReferenceOccurrence(kwid, utt_id, start * cfg.frame_shift, span * cfg.frame_shift)
            )

    refs.sort(key=lambda r: (r.kwid, r.utt_id, r.tbeg))
    return GeneratedCorpus(phones, lattices, lexicon, refs)


def random_lattice(
    rng: np.random.Generator,
    num_phones: int = 5,
    max_slots: int = 4,
    max_parallel: int = 2,
    max_skips: int = 2,
    frame_shift: float = 0.01,
    utt_id: str = "rand",
) -> Lattice:
    """Small random lattice for round-trip and oracle tests.

    A chain of slots with parallel arcs plus optional skip arcs; every arc
    lies on a complete path by construction. Arc count stays small enough
    for exhaustive path enumeration.
    """
    slots = int(rng.integers(2, max_slots + 1))
    bounds = [0]
    for _ in range(slots):
        bounds.append(bounds[-1] + int(rng.integers(2, 7)))
    nodes = tuple(LatticeNode(i, f) for i, f in enumerate(bounds))
    arcs: list[LatticeArc] = []

    def make_arc(src: int, dst: int, word: str) -> LatticeArc:
        span = bounds[dst] - bounds[src]
        return LatticeArc(
            src,
            dst,
            word,
            float(rng.normal(0.0, 1.5)),
            float(rng.normal(0.0, 3.0)),
            _random_alignment(rng, span, num_phones, 0),
        )

    for s in range(slots):
        for p in range(int(rng.integers(1, max_parallel + 1))):
            arcs.append(make_arc(s, s + 1, f"w{s}_{p}"))
    if slots >= 2:
        for _ in range(int(rng.integers(0, max_skips + 1))):
            src = int(rng.integers(0, slots - 1))
            dst = int(rng.integers(src + 2, slots + 1))
            arcs.append(make_arc(src, dst, f"skip{src}_{dst}"))

    lat = Lattice(utt_id, frame_shift, bounds[-1], nodes, tuple(arcs))
    validate_lattice(lat)
    return lat
