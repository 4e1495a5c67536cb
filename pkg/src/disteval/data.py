"""Input data model: runs, truth sets, attribute tables, repetition sets.

File formats
------------
run
    whitespace-separated ``request_id item_id rank score system_id``, one
    ranked entry per line; ``#`` starts a comment line.
truth
    ``request_id item_id gain`` with ``gain >= 0``.
attributes
    CSV with a header; the first column is the subject id, later columns are
    attribute names.  Multi-valued cells separate values with ``|``; an empty
    cell means ``unknown``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, TextIO

import numpy as np

from .errors import ParseError, ValidationError

UNKNOWN = "unknown"


def _lines(source) -> Iterable[str]:
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def _clean(line: str) -> str:
    return line.rstrip("\r\n").strip()


@dataclass(frozen=True)
class Run:
    """One system's ranked lists, ``requests[req]`` ordered by rank."""

    system_id: str
    requests: Mapping[str, tuple[str, ...]]
    scores: Mapping[str, tuple[float, ...]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for req, items in self.requests.items():
            if len(items) == 0:
                raise ValidationError(f"request {req!r} has an empty list")
            if len(set(items)) != len(items):
                raise ValidationError(f"request {req!r} lists an item twice")

    def items(self) -> set[str]:
        out = set()
        for items in self.requests.values():
            out.update(items)
        return out

    def with_system_id(self, system_id: str) -> "Run":
        return Run(system_id, self.requests, self.scores)


@dataclass(frozen=True)
class TruthSet:
    """Relevance gains keyed by ``(request_id, item_id)``."""

    gains: Mapping[tuple[str, str], float]

    def __post_init__(self):
        by_req: dict[str, dict[str, float]] = {}
        for (req, item), g in self.gains.items():
            if not g >= 0:
                raise ValidationError(f"negative gain for ({req}, {item})")
            by_req.setdefault(req, {})[item] = float(g)
        object.__setattr__(self, "_by_request", by_req)

    @property
    def requests(self) -> list[str]:
        return sorted(self._by_request)

    def for_request(self, request_id: str) -> dict[str, float]:
        return self._by_request.get(request_id, {})

    def relevant(self, request_id: str) -> list[str]:
        return sorted(i for i, g in self.for_request(request_id).items() if g > 0)

    def is_binary(self) -> bool:
        return all(g in (0.0, 1.0) for g in self.gains.values())

    def items(self) -> set[str]:
        return {item for _, item in self.gains}


@dataclass(frozen=True)
class AttributeTable:
    """Per-subject attribute values; ``data[subject][attribute]`` is a tuple."""

    kind: str
    id_column: str
    attributes: tuple[str, ...]
    data: Mapping[str, Mapping[str, tuple[str, ...]]]

    @property
    def subjects(self) -> list[str]:
        return sorted(self.data)

    def values(self, subject: str, attribute: str) -> tuple[str, ...]:
        self.require(attribute)
        row = self.data.get(subject)
        if row is None:
            return (UNKNOWN,)
        return row.get(attribute) or (UNKNOWN,)

    def weights(self, subject: str, attribute: str) -> dict[str, float]:
        """Fractional membership: each of ``k`` values gets ``1/k``."""
        vals = self.values(subject, attribute)
        w = 1.0 / len(vals)
        return {v: w for v in vals}

    def require(self, attribute: str):
        if attribute not in self.attributes:
            raise ValidationError(f"attribute {attribute!r} not in {self.kind} table")


@dataclass(frozen=True)
class Repetition:
    rep_id: str
    runs: Mapping[str, Run]
    truth: TruthSet


@dataclass(frozen=True)
class RepetitionSet:
    repetitions: tuple[Repetition, ...]

    def __post_init__(self):
        ids = [r.rep_id for r in self.repetitions]
        if len(set(ids)) != len(ids):
            raise ValidationError("repetition ids must be unique")
        if not self.repetitions:
            raise ValidationError("empty repetition set")
        systems = set(self.repetitions[0].runs)
        for rep in self.repetitions[1:]:
            if set(rep.runs) != systems:
                raise ValidationError(
                    f"repetition {rep.rep_id!r} covers systems {sorted(rep.runs)}, "
                    f"expected {sorted(systems)}"
                )

    @property
    def system_ids(self) -> list[str]:
        return sorted(self.repetitions[0].runs)


# ---------------------------------------------------------------------------
# parsing


def parse_run(source: TextIO | str) -> Run:
    entries: dict[str, dict[int, tuple[str, float]]] = {}
    system = None
    for lineno, raw in enumerate(_lines(source), 1):
        line = _clean(raw)
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", lineno)
        req, item, rank_s, score_s, sid = parts
        try:
            rank = int(rank_s)
        except ValueError:
            raise ParseError(f"non-integer rank {rank_s!r}", lineno) from None
        try:
            score = float(score_s)
        except ValueError:
            raise ParseError(f"non-numeric score {score_s!r}", lineno) from None
        if rank < 1:
            raise ParseError(f"rank must be >= 1, got {rank}", lineno)
        if system is None:
            system = sid
        elif sid != system:
            raise ParseError(f"mixed system ids {system!r} and {sid!r}", lineno)
        slots = entries.setdefault(req, {})
        if rank in slots:
            raise ParseError(f"duplicate rank {rank} for request {req!r}", lineno)
        slots[rank] = (item, score)
    if system is None:
        raise ParseError("run file has no entries")

    requests = {}
    scores = {}
    for req, slots in entries.items():
        ranks = sorted(slots)
        if ranks != list(range(1, len(ranks) + 1)):
            raise ParseError(f"ranks for request {req!r} are not contiguous from 1")
        items = tuple(slots[r][0] for r in ranks)
        if len(set(items)) != len(items):
            raise ParseError(f"request {req!r} lists an item twice")
        requests[req] = items
        scores[req] = tuple(slots[r][1] for r in ranks)
    return Run(system, requests, scores)


def serialize_run(run: Run) -> str:
    out = io.StringIO()
    for req in sorted(run.requests):
        items = run.requests[req]
        scores = run.scores.get(req) or tuple(float(len(items) - i) for i in range(len(items)))
        for rank, (item, score) in enumerate(zip(items, scores), 1):
            out.write(f"{req} {item} {rank} {score!r} {run.system_id}\n")
    return out.getvalue()


def parse_truth(source: TextIO | str) -> TruthSet:
    gains: dict[tuple[str, str], float] = {}
    for lineno, raw in enumerate(_lines(source), 1):
        line = _clean(raw)
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, got {len(parts)}", lineno)
        req, item, gain_s = parts
        try:
            gain = float(gain_s)
        except ValueError:
            raise ParseError(f"non-numeric gain {gain_s!r}", lineno) from None
        if not np.isfinite(gain):
            raise ParseError(f"non-finite gain {gain_s!r}", lineno)
        if gain < 0:
            raise ParseError(f"negative gain {gain}", lineno)
        if (req, item) in gains:
            raise ParseError(f"duplicate truth pair ({req}, {item})", lineno)
        gains[(req, item)] = gain
    return TruthSet(gains)


def serialize_truth(truth: TruthSet) -> str:
    return "".join(f"{r} {i} {g!r}\n" for (r, i), g in sorted(truth.gains.items()))


def parse_attributes(source: TextIO | str, kind: str) -> AttributeTable:
    if kind not in ("user", "item"):
        raise ValueError(f"kind must be 'user' or 'item', got {kind!r}")
    reader = csv.reader(_lines(source))
    header = None
    for row in reader:
        if row and any(c.strip() for c in row):
            header = [c.strip() for c in row]
            break
    if not header or not header[0]:
        raise ParseError("empty header")
    attrs = header[1:]
    if any(not a for a in attrs):
        raise ParseError("attribute names must be nonempty")
    data: dict[str, dict[str, tuple[str, ...]]] = {}
    for row in reader:
        if not row or not any(c.strip() for c in row):
            continue
        lineno = reader.line_num
        sid = row[0].strip()
        if not sid:
            raise ParseError("missing subject id", lineno)
        if sid in data:
            raise ParseError(f"duplicate subject id {sid!r}", lineno)
        if len(row) > len(header):
            raise ParseError(f"{len(row)} cells for {len(header)} columns", lineno)
        rec = {}
        for j, attr in enumerate(attrs, 1):
            cell = row[j].strip() if j < len(row) else ""
            vals = tuple(v.strip() for v in cell.split("|") if v.strip())
            rec[attr] = vals or (UNKNOWN,)
        data[sid] = rec
    return AttributeTable(kind, header[0], tuple(attrs), data)


def serialize_attributes(table: AttributeTable) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([table.id_column, *table.attributes])
    for sid in table.subjects:
        w.writerow([sid, *("|".join(table.data[sid][a]) for a in table.attributes)])
    return out.getvalue()


def read_run(path) -> Run:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_run(f)


def read_truth(path) -> TruthSet:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_truth(f)


def read_attributes(path, kind: str) -> AttributeTable:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_attributes(f, kind)


def read_repetitions(path) -> RepetitionSet:
    """Load ``<path>/<rep_id>/runs/*.run`` plus ``<path>/<rep_id>/truth*``."""
    root = Path(path)
    if not root.is_dir():
        raise ValidationError(f"repetition directory {str(root)!r} not found")
    reps = []
    for rep_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        run_dir = rep_dir / "runs"
        truth_files = sorted(p for p in rep_dir.iterdir() if p.is_file() and p.name.startswith("truth"))
        if not run_dir.is_dir() or len(truth_files) != 1:
            raise ValidationError(f"{rep_dir}: expected runs/ and exactly one truth file")
        runs = {}
        for f in sorted(run_dir.iterdir()):
            if f.is_file():
                run = read_run(f)
                if run.system_id in runs:
                    raise ValidationError(f"{rep_dir}: duplicate system {run.system_id!r}")
                runs[run.system_id] = run
        reps.append(Repetition(rep_dir.name, runs, read_truth(truth_files[0])))
    return RepetitionSet(tuple(reps))


def write_repetitions(repset: RepetitionSet, path):
    root = Path(path)
    for rep in repset.repetitions:
        run_dir = root / rep.rep_id / "runs"
        run_dir.mkdir(parents=True, exist_ok=True)
        for sid, run in rep.runs.items():
            (run_dir / f"{sid}.run").write_text(serialize_run(run), encoding="utf-8")
        (root / rep.rep_id / "truth.qrels").write_text(serialize_truth(rep.truth), encoding="utf-8")


# ---------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class Catalog:
    """Ordered item universe shared by exposure vectors."""

    items: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {it: j for j, it in enumerate(self.items)})
        if len(self._index) != len(self.items):
            raise ValidationError("catalog items must be unique")

    def __len__(self):
        return len(self.items)

    def index(self, item: str) -> int:
        try:
            return self._index[item]
        except KeyError:
            raise ValidationError(f"item {item!r} is outside the catalog") from None

    @classmethod
    def build(cls, runs: Iterable[Run] = (), truth: TruthSet | None = None,
              item_attributes: AttributeTable | None = None) -> "Catalog":
        """Item-attribute subjects when given, else every run and truth item."""
        if item_attributes is not None:
            return cls(tuple(item_attributes.subjects))
        items = set()
        for run in runs:
            items |= run.items()
        if truth is not None:
            items |= truth.items()
        return cls(tuple(sorted(items)))


# ---------------------------------------------------------------------------
# synthetic fixtures

_GENRES = ("Action", "Comedy", "Drama", "Horror", "Romance", "SciFi")
_GENDERS = ("F", "M")


def synth_fixture(seed: int, n_requests: int, catalog_size: int, n_relevant: int,
                  list_length: int, n_systems: int):
    """Deterministic toy evaluation: runs, truth and (user, item) attributes.

    Items have Zipf-like popularity; each request gets ``n_relevant`` truth
    items drawn by popularity.  System ``k`` scores items by a blend of a
    noisy relevance signal and popularity, with more popularity bias for
    higher ``k``.
    """
    for name, v in [("n_requests", n_requests), ("catalog_size", catalog_size),
                    ("n_relevant", n_relevant), ("list_length", list_length),
                    ("n_systems", n_systems)]:
        if v < 1:
            raise ValidationError(f"{name} must be >= 1")
    if n_relevant > catalog_size:
        raise ValidationError("n_relevant cannot exceed catalog_size")
    if list_length > catalog_size:
        raise ValidationError("list_length cannot exceed catalog_size")

    rng = np.random.default_rng(seed)
    iw = len(str(catalog_size))
    uw = len(str(n_requests))
    items = [f"i{j:0{iw}d}" for j in range(1, catalog_size + 1)]
    users = [f"u{j:0{uw}d}" for j in range(1, n_requests + 1)]
    pop = 1.0 / np.arange(1, catalog_size + 1) ** 0.8
    pop = pop[rng.permutation(catalog_size)]
    pop /= pop.sum()

    gains = {}
    rel_mask = np.zeros((n_requests, catalog_size), dtype=bool)
    for u, user in enumerate(users):
        chosen = rng.choice(catalog_size, size=n_relevant, replace=False, p=pop)
        rel_mask[u, chosen] = True
        for j in sorted(chosen):
            gains[(user, items[j])] = 1.0

    runs = {}
    for k in range(n_systems):
        sid = f"sys{k + 1}"
        bias = k / max(n_systems, 2)
        noise = rng.standard_normal((n_requests, catalog_size))
        signal = rel_mask * (1.5 - bias) + noise + bias * 4.0 * np.log(pop * catalog_size)
        requests, scores = {}, {}
        for u, user in enumerate(users):
            order = np.argsort(-signal[u], kind="stable")[:list_length]
            requests[user] = tuple(items[j] for j in order)
            scores[user] = tuple(float(round(s, 6)) for s in signal[u, order])
        runs[sid] = Run(sid, requests, scores)

    gender = rng.choice(len(_GENDERS), size=n_requests, p=[0.3, 0.7])
    users_tab = AttributeTable(
        "user", "user", ("gender",),
        {user: {"gender": (_GENDERS[gender[u]],)} for u, user in enumerate(users)},
    )
    item_data = {}
    for item in items:
        k = int(rng.integers(1, 4))
        picks = sorted(rng.choice(len(_GENRES), size=k, replace=False))
        item_data[item] = {"genre": tuple(_GENRES[g] for g in picks)}
    items_tab = AttributeTable("item", "item", ("genre",), item_data)
    return runs, TruthSet(gains), (users_tab, items_tab)


def write_fixture(out_dir, runs, truth, attributes):
    out = Path(out_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    for sid in sorted(runs):
        (out / "runs" / f"{sid}.run").write_text(serialize_run(runs[sid]), encoding="utf-8")
    (out / "truth.qrels").write_text(serialize_truth(truth), encoding="utf-8")
    users, items = attributes
    (out / "users.csv").write_text(serialize_attributes(users), encoding="utf-8")
    (out / "items.csv").write_text(serialize_attributes(items), encoding="utf-8")
    return sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
