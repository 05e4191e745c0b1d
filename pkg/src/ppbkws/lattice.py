"""Domain types for lattices, phone sets, keyword lexicons, hits and references.

All types are immutable after construction; validation happens eagerly so
that downstream stages can assume well-formed inputs.
"""

from dataclasses import dataclass, field


class LatticeError(ValueError):
    """Raised when a lattice (or related record) violates a structural invariant."""


@dataclass(frozen=True)
class PhoneSet:
    """Ordered phone inventory; the index of a label is its phone id."""

    phones: tuple[str, ...]
    silence_id: int

    def __post_init__(self):
        if len(self.phones) < 2:
            raise LatticeError("phone set needs at least 2 phones")
        if len(set(self.phones)) != len(self.phones):
            raise LatticeError("phone labels must be unique")
        if any(not p for p in self.phones):
            raise LatticeError("phone labels must be non-empty")
        if not 0 <= self.silence_id < len(self.phones):
            raise LatticeError(f"silence id {self.silence_id} out of range")

    def __len__(self) -> int:
        return len(self.phones)

    def id_of(self, label: str) -> int:
        try:
            return self.phones.index(label)
        except ValueError:
            raise LatticeError(f"unknown phone {label}") from None


@dataclass(frozen=True)
class LatticeNode:
    id: int
    frame: int


@dataclass(frozen=True)
class LatticeArc:
    """Word arc with scores and a per-phone frame alignment.

    `phone_alignment` is a sequence of (phone id, duration) pairs whose
    durations sum to frame(dst) - frame(src). Log quantities are natural logs.
    """

    src: int
    dst: int
    word: str
    lm_logprob: float
    ac_loglik: float
    phone_alignment: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class Lattice:
    """Timed DAG of word arcs spanning frames [0, num_frames].

    Initial nodes (no incoming arcs) share one frame, final nodes (no
    outgoing arcs) share another; after trimming every arc lies on a
    complete initial->final path. `num_frames` may exceed the final-node
    frame, in which case the trailing frames are covered by no arc.
    """

    utt_id: str
    frame_shift: float
    num_frames: int
    nodes: tuple[LatticeNode, ...]
    arcs: tuple[LatticeArc, ...]

    def node_frame(self, node_id: int) -> int:
        return self._frame_by_id[node_id]

    @property
    def _frame_by_id(self) -> dict[int, int]:
        # cached lazily on the instance; dataclass is frozen so use __dict__
        cache = self.__dict__.get("_frames")
        if cache is None:
            cache = {n.id: n.frame for n in self.nodes}
            self.__dict__["_frames"] = cache
        return cache

    @property
    def initial_nodes(self) -> list[int]:
        """In-degree-0 nodes at the earliest such frame; later sourceless
        nodes are dangling, not alternative starts."""
        dsts = {a.dst for a in self.arcs}
        cands = [n for n in self.nodes if n.id not in dsts]
        if not cands:
            return []
        first = min(n.frame for n in cands)
        return [n.id for n in cands if n.frame == first]

    @property
    def final_nodes(self) -> list[int]:
        """Out-degree-0 nodes at the latest such frame."""
        srcs = {a.src for a in self.arcs}
        cands = [n for n in self.nodes if n.id not in srcs]
        if not cands:
            return []
        last = max(n.frame for n in cands)
        return [n.id for n in cands if n.frame == last]

    @property
    def duration_seconds(self) -> float:
        return self.num_frames * self.frame_shift


@dataclass(frozen=True)
class KeywordLexicon:
    """Map kwid -> pronunciations (phone-id sequences), plus display word forms."""

    entries: dict[str, tuple[tuple[int, ...], ...]]
    word_forms: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for kwid, prons in self.entries.items():
            if not prons:
                raise LatticeError(f"keyword {kwid} has no pronunciations")
            if any(len(p) == 0 for p in prons):
                raise LatticeError(f"keyword {kwid} has an empty pronunciation")

    def word_form(self, kwid: str) -> str:
        return self.word_forms.get(kwid, kwid)


@dataclass(frozen=True)
class Hit:
    """One scored keyword detection.

    `score` is a natural-log probability as emitted by the decoder and a
    probability share in (0, 1] after sum-to-one normalization.
    """

    kwid: str
    utt_id: str
    tbeg: float
    dur: float
    score: float
    decision: str = "YES"

    def __post_init__(self):
        if self.tbeg < 0:
            raise LatticeError(f"hit tbeg {self.tbeg} < 0")
        if self.dur <= 0:
            raise LatticeError(f"hit dur {self.dur} <= 0")
        if self.decision not in ("YES", "NO"):
            raise LatticeError(f"hit decision must be YES or NO, got {self.decision}")

    @property
    def midpoint(self) -> float:
        return self.tbeg + 0.5 * self.dur


@dataclass(frozen=True)
class ReferenceOccurrence:
    kwid: str
    utt_id: str
    tbeg: float
    dur: float

    def __post_init__(self):
        if self.dur <= 0:
            raise LatticeError(f"reference dur {self.dur} <= 0")

    @property
    def midpoint(self) -> float:
        return self.tbeg + 0.5 * self.dur


def validate_lattice(lat: Lattice, phones: PhoneSet | None = None, *, connectivity: bool = True) -> None:
    """Check structural invariants; raises LatticeError on the first violation.

    With connectivity=False only per-node/per-arc checks run, so a lattice
    can be validated before trimming.
    """
    ids = [n.id for n in lat.nodes]
    if len(set(ids)) != len(ids):
        raise LatticeError(f"{lat.utt_id}: duplicate node ids")
    if lat.num_frames <= 0:
        raise LatticeError(f"{lat.utt_id}: num_frames must be positive")
    if lat.frame_shift <= 0:
        raise LatticeError(f"{lat.utt_id}: frame_shift must be positive")
    frames = lat._frame_by_id
    for n in lat.nodes:
        if not 0 <= n.frame <= lat.num_frames:
            raise LatticeError(f"{lat.utt_id}: node {n.id} frame {n.frame} outside [0, {lat.num_frames}]")
    if not lat.arcs:
        raise LatticeError(f"{lat.utt_id}: empty lattice")
    for a in lat.arcs:
        if a.src not in frames or a.dst not in frames:
            raise LatticeError(f"{lat.utt_id}: arc references unknown node {a.src}->{a.dst}")
        span = frames[a.dst] - frames[a.src]
        if span <= 0:
            raise LatticeError(f"{lat.utt_id}: arc {a.src}->{a.dst} spans {span} frames")
        total = sum(d for _, d in a.phone_alignment)
        if total != span:
            raise LatticeError(
                f"{lat.utt_id}: arc {a.src}->{a.dst} alignment durations sum to {total}, expected {span}"
            )
        for p, d in a.phone_alignment:
            if d < 1:
                raise LatticeError(f"{lat.utt_id}: arc {a.src}->{a.dst} has duration {d} < 1")
            if p < 0 or (phones is not None and p >= len(phones)):
                raise LatticeError(f"{lat.utt_id}: arc {a.src}->{a.dst} has phone id {p} out of range")
    # arcs always move forward in time (span check above), so any cycle has
    # already been rejected; what remains is initial/final frame agreement
    if connectivity:
        init = lat.initial_nodes
        fin = lat.final_nodes
        if not init or not fin:
            raise LatticeError(f"{lat.utt_id}: empty lattice")
        if len({frames[i] for i in init}) != 1:
            raise LatticeError(f"{lat.utt_id}: initial nodes at differing frames")
        if len({frames[f] for f in fin}) != 1:
            raise LatticeError(f"{lat.utt_id}: final nodes at differing frames")


def trim_lattice(lat: Lattice) -> Lattice:
    """Drop arcs that do not lie on a complete initial->final path.

    Nodes left without arcs are dropped as well. Raises LatticeError when
    nothing survives (no complete path exists).
    """
    init = set(lat.initial_nodes)
    fin = set(lat.final_nodes)
    fwd: dict[int, list[int]] = {}
    bwd: dict[int, list[int]] = {}
    for i, a in enumerate(lat.arcs):
        fwd.setdefault(a.src, []).append(i)
        bwd.setdefault(a.dst, []).append(i)

    def reach(seeds: set[int], adj: dict[int, list[int]], forward: bool) -> set[int]:
        seen = set(seeds)
        stack = list(seeds)
        while stack:
            n = stack.pop()
            for i in adj.get(n, ()):
                nxt = lat.arcs[i].dst if forward else lat.arcs[i].src
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    from_init = reach(init, fwd, True)
    to_fin = reach(fin, bwd, False)
    keep = [a for a in lat.arcs if a.src in from_init and a.dst in to_fin]
    if not keep:
        raise LatticeError(f"{lat.utt_id}: empty lattice")
    used = {a.src for a in keep} | {a.dst for a in keep}
    nodes = tuple(n for n in lat.nodes if n.id in used)
    return Lattice(lat.utt_id, lat.frame_shift, lat.num_frames, nodes, tuple(keep))


def topo_sort_nodes(lat: Lattice) -> list[int]:
    """Node ids in topological order (by frame, ties by id)."""
    return [n.id for n in sorted(lat.nodes, key=lambda n: (n.frame, n.id))]


def sort_hits(hits: list[Hit]) -> list[Hit]:
    """Canonical deterministic ordering used everywhere hits are emitted."""
    return sorted(hits, key=lambda h: (h.kwid, h.utt_id, h.tbeg, h.dur, -h.score))
