"""Text and binary file formats.

Lattices, phone sets, keyword lexicons, hit lists, references, posterior
matrices, confusion models and report files all live here so that every
on-disk surface has one parser and one serializer, each a lossless pair.

Lattice file:
    UTT <utt_id> <frame_shift> <num_frames>
    NODE <id> <frame>                       (one per node)
    ARC <src> <dst> <word> <lm> <ac> <p0:d0,p1:d1,...>
Several UTT blocks may be concatenated; '#' starts a comment.
"""

import warnings
from pathlib import Path

import numpy as np

from .lattice import (
    Hit,
    KeywordLexicon,
    Lattice,
    LatticeArc,
    LatticeError,
    LatticeNode,
    PhoneSet,
    ReferenceOccurrence,
    trim_lattice,
    validate_lattice,
)
from .posteriors import PosteriorMatrix
from .smoothing import ConfusionModel


class ParseError(ValueError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def fmt_float(x: float) -> str:
    # repr of a Python float is the shortest round-tripping decimal form
    return repr(float(x))


_fmt = fmt_float


def _content_lines(text: str):
    """Yield (lineno, stripped line) skipping blanks and comments."""
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line


# ---------------------------------------------------------------------------
# Phone sets


def parse_phone_set(text: str) -> PhoneSet:
    labels = [line for _, line in _content_lines(text)]
    sil = [i for i, p in enumerate(labels) if p == "SIL"]
    if len(sil) != 1:
        raise LatticeError(f"phone set must contain SIL exactly once, found {len(sil)}")
    return PhoneSet(tuple(labels), sil[0])


def serialize_phone_set(phones: PhoneSet) -> str:
    return "\n".join(phones.phones) + "\n"


# ---------------------------------------------------------------------------
# Lattices


def _parse_alignment(token: str, phones: PhoneSet | None, lineno: int) -> tuple[tuple[int, int], ...]:
    pairs = []
    for part in token.split(","):
        try:
            ph, dur = part.split(":")
        except ValueError:
            raise ParseError(lineno, f"bad alignment entry {part!r}") from None
        if ph.lstrip("-").isdigit():
            pid = int(ph)
        elif phones is not None:
            pid = phones.id_of(ph)
        else:
            raise ParseError(lineno, f"phone label {ph!r} needs a phone set to resolve")
        try:
            d = int(dur)
        except ValueError:
            raise ParseError(lineno, f"bad duration {dur!r}") from None
        pairs.append((pid, d))
    return tuple(pairs)


def parse_lattices(text: str, phones: PhoneSet | None = None) -> list[Lattice]:
    """Parse one or more concatenated UTT blocks, trimming and validating each."""
    lattices: list[Lattice] = []
    header = None  # (utt_id, frame_shift, num_frames)
    nodes: list[LatticeNode] = []
    arcs: list[LatticeArc] = []

    def finish():
        if header is None:
            return
        utt_id, shift, nframes = header
        raw = Lattice(utt_id, shift, nframes, tuple(nodes), tuple(arcs))
        validate_lattice(raw, phones, connectivity=False)
        lat = trim_lattice(raw)
        validate_lattice(lat, phones)
        lattices.append(lat)

    for lineno, line in _content_lines(text):
        fields = line.split()
        kind = fields[0]
        if kind == "UTT":
            if len(fields) != 4:
                raise ParseError(lineno, f"UTT needs 3 fields, got {len(fields) - 1}")
            finish()
            try:
                header = (fields[1], float(fields[2]), int(fields[3]))
            except ValueError as e:
                raise ParseError(lineno, f"bad UTT header: {e}") from None
            nodes, arcs = [], []
        elif kind == "NODE":
            if header is None:
                raise ParseError(lineno, "NODE before UTT")
            if len(fields) != 3:
                raise ParseError(lineno, f"NODE needs 2 fields, got {len(fields) - 1}")
            try:
                nodes.append(LatticeNode(int(fields[1]), int(fields[2])))
            except ValueError as e:
                raise ParseError(lineno, f"bad NODE: {e}") from None
        elif kind == "ARC":
            if header is None:
                raise ParseError(lineno, "ARC before UTT")
            if len(fields) != 7:
                raise ParseError(lineno, f"ARC needs 6 fields, got {len(fields) - 1}")
            try:
                src, dst = int(fields[1]), int(fields[2])
                lm, ac = float(fields[4]), float(fields[5])
            except ValueError as e:
                raise ParseError(lineno, f"bad ARC: {e}") from None
            align = _parse_alignment(fields[6], phones, lineno)
            arcs.append(LatticeArc(src, dst, fields[3], lm, ac, align))
        else:
            raise ParseError(lineno, f"unknown record {kind!r}")
    finish()
    return lattices


def parse_lattice(text: str, phones: PhoneSet | None = None) -> Lattice:
    """Parse exactly one lattice."""
    lats = parse_lattices(text, phones)
    if len(lats) != 1:
        raise LatticeError(f"expected exactly 1 lattice, found {len(lats)}")
    return lats[0]


def serialize_lattice(lat: Lattice) -> str:
    out = [f"UTT {lat.utt_id} {_fmt(lat.frame_shift)} {lat.num_frames}"]
    for n in lat.nodes:
        out.append(f"NODE {n.id} {n.frame}")
    for a in lat.arcs:
        align = ",".join(f"{p}:{d}" for p, d in a.phone_alignment)
        out.append(f"ARC {a.src} {a.dst} {a.word} {_fmt(a.lm_logprob)} {_fmt(a.ac_loglik)} {align}")
    return "\n".join(out) + "\n"


def serialize_lattices(lats: list[Lattice]) -> str:
    return "".join(serialize_lattice(lat) for lat in lats)


# ---------------------------------------------------------------------------
# Keyword lexicons


def parse_keywords(text: str, phones: PhoneSet) -> KeywordLexicon:
    entries: dict[str, list[tuple[int, ...]]] = {}
    forms: dict[str, str] = {}
    for lineno, line in _content_lines(text):
        fields = line.split()
        if len(fields) < 3:
            raise ParseError(lineno, "keyword line needs kwid, word form and at least one phone")
        kwid, form = fields[0], fields[1]
        pron = []
        for tok in fields[2:]:
            if tok in phones.phones:
                pron.append(phones.phones.index(tok))
            elif tok.isdigit() and int(tok) < len(phones):
                pron.append(int(tok))
            else:
                raise LatticeError(f"unknown phone {tok}")
        pron = tuple(pron)
        forms.setdefault(kwid, form)
        prons = entries.setdefault(kwid, [])
        if pron in prons:
            warnings.warn(f"duplicate pronunciation for {kwid}, deduplicating", stacklevel=2)
        else:
            prons.append(pron)
    return KeywordLexicon({k: tuple(v) for k, v in entries.items()}, forms)


def serialize_keywords(lex: KeywordLexicon, phones: PhoneSet) -> str:
    out = []
    for kwid in sorted(lex.entries):
        for pron in lex.entries[kwid]:
            labels = " ".join(phones.phones[p] for p in pron)
            out.append(f"{kwid} {lex.word_form(kwid)} {labels}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Hit lists and references (TSV)


def parse_hits(text: str) -> list[Hit]:
    hits = []
    for lineno, line in _content_lines(text):
        fields = line.split("\t") if "\t" in line else line.split()
        if len(fields) != 6:
            raise ParseError(lineno, f"hit line needs 6 fields, got {len(fields)}")
        try:
            hits.append(Hit(fields[0], fields[1], float(fields[2]), float(fields[3]), float(fields[4]), fields[5]))
        except (ValueError, LatticeError) as e:
            raise ParseError(lineno, f"bad hit: {e}") from None
    return hits


def serialize_hits(hits: list[Hit]) -> str:
    lines = [
        "\t".join([h.kwid, h.utt_id, _fmt(h.tbeg), _fmt(h.dur), _fmt(h.score), h.decision])
        for h in hits
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_refs(text: str) -> list[ReferenceOccurrence]:
    refs = []
    for lineno, line in _content_lines(text):
        fields = line.split("\t") if "\t" in line else line.split()
        if len(fields) != 4:
            raise ParseError(lineno, f"reference line needs 4 fields, got {len(fields)}")
        try:
            refs.append(ReferenceOccurrence(fields[0], fields[1], float(fields[2]), float(fields[3])))
        except (ValueError, LatticeError) as e:
            raise ParseError(lineno, f"bad reference: {e}") from None
    return refs


def serialize_refs(refs: list[ReferenceOccurrence]) -> str:
    lines = ["\t".join([r.kwid, r.utt_id, _fmt(r.tbeg), _fmt(r.dur)]) for r in refs]
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Posterior matrices: text by default, raw little-endian float32 for `.bin`

_PPB_MAGIC = "PPB"


def save_posteriors(path: str | Path, m: PosteriorMatrix) -> None:
    path = Path(path)
    header = f"{_PPB_MAGIC} {m.utt_id} {_fmt(m.frame_shift)} {m.values.shape[0]} {m.values.shape[1]} {m.kind}\n"
    if path.suffix == ".bin":
        with open(path, "wb") as f:
            f.write(header.encode())
            f.write(np.ascontiguousarray(m.values, dtype="<f4").tobytes())
    else:
        with open(path, "w") as f:
            f.write(header)
            for row in m.values:
                f.write(" ".join(_fmt(v) for v in row))
                f.write("\n")


def _parse_ppb_header(line: str) -> tuple[str, float, int, int, str]:
    fields = line.split()
    if len(fields) != 6 or fields[0] != _PPB_MAGIC:
        raise ParseError(1, f"bad posterior header {line!r}")
    return fields[1], float(fields[2]), int(fields[3]), int(fields[4]), fields[5]


def load_posteriors(path: str | Path) -> PosteriorMatrix:
    path = Path(path)
    if path.suffix == ".bin":
        with open(path, "rb") as f:
            header = f.readline().decode()
            utt_id, shift, t, n, kind = _parse_ppb_header(header)
            buf = f.read(4 * t * n)
            if len(buf) != 4 * t * n:
                raise LatticeError(f"{path}: truncated posterior payload")
            values = np.frombuffer(buf, dtype="<f4").reshape(t, n).astype(np.float64)
    else:
        with open(path) as f:
            utt_id, shift, t, n, kind = _parse_ppb_header(f.readline().strip())
            values = np.loadtxt(f, dtype=np.float64, ndmin=2)
        if values.shape != (t, n):
            raise LatticeError(f"{path}: expected {t}x{n} values, got {values.shape}")
    return PosteriorMatrix(utt_id, shift, values, kind)


def load_posteriors_dir(directory: str | Path) -> list[PosteriorMatrix]:
    """All matrices under a directory, ordered by utterance id."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix in (".ppb", ".bin"))
    mats = [load_posteriors(p) for p in paths]
    return sorted(mats, key=lambda m: m.utt_id)


# ---------------------------------------------------------------------------
# Confusion models


def serialize_confusion_model(cm: ConfusionModel) -> str:
    n = cm.means.shape[0]
    out = [f"CM {n}"]
    for row in cm.means:
        out.append(" ".join(_fmt(v) for v in row))
    out.append(" ".join(str(int(c)) for c in cm.counts))
    return "\n".join(out) + "\n"


def parse_confusion_model(text: str) -> ConfusionModel:
    lines = [line for _, line in _content_lines(text)]
    if not lines or not lines[0].startswith("CM "):
        raise ParseError(1, "missing CM header")
    n = int(lines[0].split()[1])
    if len(lines) != n + 2:
        raise ParseError(1, f"confusion model needs {n + 2} lines, got {len(lines)}")
    means = np.array([[float(v) for v in lines[1 + i].split()] for i in range(n)], dtype=np.float64)
    counts = np.array([int(v) for v in lines[n + 1].split()], dtype=np.int64)
    if means.shape != (n, n) or counts.shape != (n,):
        raise ParseError(1, "confusion model dimensions disagree with header")
    return ConfusionModel(means, counts)


# ---------------------------------------------------------------------------
# Reports


def serialize_rtf_report(rows: list[tuple[str, float, float, float]]) -> str:
    lines = ["\t".join([kw, _fmt(audio), _fmt(wall), _fmt(rtf)]) for kw, audio, wall, rtf in rows]
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_twv_curve(thresholds, twvs, mtwv: float, best_threshold: float) -> str:
    lines = [f"{_fmt(th)}\t{_fmt(tw)}" for th, tw in zip(thresholds, twvs)]
    lines.append(f"MTWV {_fmt(mtwv)} {_fmt(best_threshold)}")
    return "\n".join(lines) + "\n"
