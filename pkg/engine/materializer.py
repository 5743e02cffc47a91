"""Internal reference engine: executes a bushy tree over CSV sources into canonical N-Triples.

Leaves run on a thread pool; a union is scheduled as soon as both of its children are done.
Every intermediate result is a file `<run_dir>/<node_id>.nt`. Leaf outputs are sorted and
duplicate-free, DR merges sorted inputs, NDR concatenates after checking its inputs are
disjoint. The final file is decoded, sorted and duplicate-free.
"""
from __future__ import annotations

import csv
import heapq
import itertools
import logging
import os
import shutil
import tempfile
import threading
import time
from collections import defaultdict
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping

from config.settings import DR_MEMORY_LIMIT
from engine.ntriples import column_index, compile_term, iri, triple
from planner.bushy_planner import BushyTree, Leaf, UnionOp, node_ids
from planner.partitioner import AssertionGroup, PartitionSet, no_partition
from planner.rml_model import RDF_TYPE, AssertionKind, DataIntegrationSystem, MappingAssertion
from utils.errors import LeafTimeoutError, PlanSoundnessError, SourceReadError

logger = logging.getLogger(__name__)

BASE36_ALPHABET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"
# rows between deadline checks
CHECK_EVERY = 1024


def encode_base36(number: int) -> str:
    if number < 0:
        raise ValueError("Base36 resource ids are nonnegative")
    if number < len(BASE36_ALPHABET):
        return BASE36_ALPHABET[number]
    digits = []
    while number:
        number, i = divmod(number, 36)
        digits.append(BASE36_ALPHABET[i])
    return "".join(reversed(digits))


def decode_base36(text: str) -> int:
    if not text or any(c not in BASE36_ALPHABET for c in text):
        raise ValueError(f"Not a Base36 resource id: {text!r}")
    return int(text, 36)


class ResourceDictionary:
    """Append-only resource <-> id map shared by the leaf workers."""

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._resources: list[str] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._resources)

    @property
    def next_id(self) -> int:
        return len(self._resources)

    def encode(self, resource: str) -> str:
        code = self._ids.get(resource)
        if code is None:
            with self._lock:
                code = self._ids.get(resource)
                if code is None:
                    code = len(self._resources)
                    self._resources.append(resource)
                    self._ids[resource] = code
        return encode_base36(code)

    def decode(self, code: str) -> str:
        return self._resources[decode_base36(code)]

    def encode_triple(self, subject: str, predicate: str, obj: str) -> str:
        return f"{self.encode(subject)} {self.encode(predicate)} {self.encode(obj)}\n"

    def decode_line(self, line: str) -> str:
        s, p, o = line.split()
        return triple(self.decode(s), self.decode(p), self.decode(o))


@dataclass(frozen=True)
class TripleSet:
    path: str
    cardinality: int
    sorted: bool = False


# --- file helpers ---

def _iter_lines(path: str | Path) -> Iterator[str]:
    with open(path, encoding="utf-8") as handle:
        yield from handle


def _write_lines(path: str | Path, lines) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.writelines(lines)


def _merge_unique(inputs, out_path: str | Path) -> int:
    count = 0
    previous = None
    with open(out_path, "w", encoding="utf-8") as out:
        for line in heapq.merge(*inputs):
            if line != previous:
                out.write(line)
                count += 1
                previous = line
    return count


def sort_unique(path: str | Path, out_path: str | Path, memory_limit: int = DR_MEMORY_LIMIT,
                transform: Callable[[str], str] | None = None) -> int:
    """Sort a triple file with duplicate elimination, in sorted runs of at most `memory_limit` lines."""
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, encoding="utf-8") as handle:
        chunks = iter(lambda: list(itertools.islice(handle, memory_limit)), [])
        first = next(chunks, None)
        second = next(chunks, None) if first is not None else None
        if second is None:
            chunk = first or []
            lines = sorted(set(map(transform, chunk) if transform else chunk))
            _write_lines(out_path, lines)
            return len(lines)
        with tempfile.TemporaryDirectory(dir=Path(out_path).parent) as scratch:
            runs = []
            for k, chunk in enumerate(itertools.chain([first, second], chunks)):
                run = Path(scratch) / f"run{k}.nt"
                _write_lines(run, sorted(set(map(transform, chunk) if transform else chunk)))
                runs.append(run)
            logger.debug("external sort of %s over %d runs", path, len(runs))
            return _merge_unique([_iter_lines(r) for r in runs], out_path)


def _first_shared(left: TripleSet, right: TripleSet) -> str | None:
    if left.sorted and right.sorted:
        a, b = _iter_lines(left.path), _iter_lines(right.path)
        x, y = next(a, None), next(b, None)
        while x is not None and y is not None:
            if x == y:
                return x
            if x < y:
                x = next(a, None)
            else:
                y = next(b, None)
        return None
    small, large = sorted((left, right), key=lambda ts: ts.cardinality)
    seen = set(_iter_lines(small.path))
    for line in _iter_lines(large.path):
        if line in seen:
            return line
    return None


def union_triples(op: UnionOp, left: TripleSet, right: TripleSet, out_path: str | Path, *,
                  memory_limit: int = DR_MEMORY_LIMIT, check_disjoint: bool = True,
                  node: str | None = None, decode: Callable[[str], str] | None = None) -> TripleSet:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if op is UnionOp.DR:
        with tempfile.TemporaryDirectory(dir=out_path.parent) as scratch:
            inputs = []
            for k, ts in enumerate((left, right)):
                if ts.sorted:
                    inputs.append(ts.path)
                else:
                    sorted_path = Path(scratch) / f"input{k}.nt"
                    sort_unique(ts.path, sorted_path, memory_limit)
                    inputs.append(sorted_path)
            count = _merge_unique([_iter_lines(p) for p in inputs], out_path)
        return TripleSet(str(out_path), count, sorted=True)

    if check_disjoint:
        shared = _first_shared(left, right)
        if shared is not None:
            raise PlanSoundnessError(decode(shared).rstrip("\n") if decode else shared.rstrip("\n"), node)
    with open(out_path, "w", encoding="utf-8") as out:
        for ts in (left, right):
            with open(ts.path, encoding="utf-8") as handle:
                shutil.copyfileobj(handle, out)
    still_sorted = (left.sorted and right.cardinality == 0) or (right.sorted and left.cardinality == 0)
    return TripleSet(str(out_path), left.cardinality + right.cardinality, sorted=still_sorted)


# --- leaves ---

class _Deadline:
    def __init__(self, group_id: str, seconds: float | None):
        self.group_id = group_id
        self.seconds = seconds
        self.at = None if seconds is None else time.monotonic() + seconds

    def check(self) -> None:
        if self.at is not None and time.monotonic() >= self.at:
            raise LeafTimeoutError(self.group_id, self.seconds)


def read_source(path: str, source_id: str) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8-sig") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            rows = list(reader)
    except (OSError, csv.Error, UnicodeDecodeError) as exc:
        raise SourceReadError(f"Cannot read source {source_id} at {path}: {exc}") from exc
    if not header:
        raise SourceReadError(f"Source {source_id} has no header row")
    return header, rows


def _cell(row: list[str], position: int) -> str:
    return row[position] if position < len(row) else ""


def assertion_triples(a: MappingAssertion, table: Callable[[str], tuple[list[str], list[list[str]]]],
                      deadline: _Deadline | None = None) -> Iterator[tuple[str, str, str]]:
    """(subject, predicate, object) terms produced by one assertion."""
    check = deadline.check if deadline is not None else (lambda: None)
    check()
    header, rows = table(a.child_source)
    subject = compile_term(a.subject, header, a.child_source)
    predicate = iri(RDF_TYPE if a.kind is AssertionKind.CONCEPT else a.predicate)

    if a.kind is AssertionKind.MULTI_SOURCE_ROLE:
        parent_header, parent_rows = table(a.parent_source)
        parent_key = column_index(parent_header, a.parent_source)(a.join.parent_attribute)
        parent_object = compile_term(a.object, parent_header, a.parent_source)
        child_key = column_index(header, a.child_source)(a.join.child_attribute)
        index: dict[str, set[str]] = defaultdict(set)
        for n, row in enumerate(parent_rows):
            if n % CHECK_EVERY == 0:
                check()
            key = _cell(row, parent_key)
            obj = parent_object(row) if key else None
            if obj is not None:
                index[key].add(obj)
        for n, row in enumerate(rows):
            if n % CHECK_EVERY == 0:
                check()
            key = _cell(row, child_key)
            matches = index.get(key) if key else None
            if not matches:
                continue
            s = subject(row)
            if s is not None:
                for obj in matches:
                    yield s, predicate, obj
        return

    obj_term = compile_term(a.object, header, a.child_source)
    for n, row in enumerate(rows):
        if n % CHECK_EVERY == 0:
            check()
        s = subject(row)
        o = obj_term(row) if s is not None else None
        if o is not None:
            yield s, predicate, o


def materialize_group(g: AssertionGroup, dis: DataIntegrationSystem, out_path: str | Path, *,
                      dictionary: ResourceDictionary | None = None,
                      timeout: float | None = None) -> TripleSet:
    deadline = _Deadline(g.id, timeout)
    cache: dict[str, tuple[list[str], list[list[str]]]] = {}

    def table(source_id: str):
        if source_id not in cache:
            cache[source_id] = read_source(dis.source(source_id).path, source_id)
        return cache[source_id]

    lines: set[str] = set()
    for aid in sorted(g.executed):
        for s, p, o in assertion_triples(dis.assertion(aid), table, deadline):
            lines.add(dictionary.encode_triple(s, p, o) if dictionary is not None else triple(s, p, o))
    ordered = sorted(lines)
    _write_lines(out_path, ordered)
    logger.debug("group %s: %d triples", g.id, len(ordered))
    return TripleSet(str(out_path), len(ordered), sorted=True)


def materialize_all(dis: DataIntegrationSystem, out_path: str | Path) -> TripleSet:
    """All of M executed as one group: the reference output for plan equivalence."""
    partitions = no_partition(dis)
    if not partitions.groups:
        _write_lines(out_path, [])
        return TripleSet(str(out_path), 0, sorted=True)
    return materialize_group(partitions.groups[0], dis, out_path)


# --- tree execution ---

@dataclass
class ExecutionReport:
    output: str
    final_triples: int = 0
    leaf_seconds: dict[str, float] = field(default_factory=dict)
    union_seconds: dict[str, float] = field(default_factory=dict)
    triple_counts: dict[str, int] = field(default_factory=dict)
    failed_leaves: list[str] = field(default_factory=list)
    peak_parallelism: int = 0
    completion_percent: float = 100.0
    total_seconds: float = 0.0

    @property
    def union_phase_seconds(self) -> float:
        return sum(self.union_seconds.values())

    @property
    def partial(self) -> bool:
        return bool(self.failed_leaves)

    def to_json(self) -> dict[str, Any]:
        return {
            "output": self.output,
            "final_triples": self.final_triples,
            "leaf_seconds": self.leaf_seconds,
            "union_seconds": self.union_seconds,
            "union_phase_seconds": self.union_phase_seconds,
            "triple_counts": self.triple_counts,
            "failed_leaves": self.failed_leaves,
            "peak_parallelism": self.peak_parallelism,
            "completion_percent": self.completion_percent,
            "total_seconds": self.total_seconds,
        }


class _Activity:
    def __init__(self):
        self.lock = threading.Lock()
        self.active = 0
        self.peak = 0

    def __enter__(self):
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)

    def __exit__(self, *exc):
        with self.lock:
            self.active -= 1


def execute_tree(tree: BushyTree | None, partitions: PartitionSet, dis: DataIntegrationSystem,
                 run_dir: str | Path, *, output: str | Path | None = None,
                 parallelism: int | None = None, timeout: float | None = None,
                 leaf_timeouts: Mapping[str, float] | None = None, compress: bool = False,
                 memory_limit: int = DR_MEMORY_LIMIT, check_disjoint: bool = True,
                 leaf_results: Mapping[str, TripleSet] | None = None) -> ExecutionReport:
    """Run `tree` bottom-up; a timed-out leaf feeds an empty input to its ancestors."""
    started = time.perf_counter()
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    output = Path(output) if output else run_dir / "kg.nt"
    report = ExecutionReport(output=str(output))
    if tree is None:
        _write_lines(output, [])
        report.total_seconds = time.perf_counter() - started
        return report
    if compress and leaf_results:
        raise ValueError("precomputed leaf results cannot be combined with compression")

    dictionary = ResourceDictionary() if compress else None
    leaf_timeouts = leaf_timeouts or {}
    groups = {g.id: g for g in partitions.groups}
    numbered = node_ids(tree)
    node_of = dict(numbered)
    name_of = {id(sub): name for name, sub in numbered}
    parent_of: dict[str, str] = {}
    for name, sub in numbered:
        if not isinstance(sub, Leaf):
            parent_of[name_of[id(sub.left)]] = name
            parent_of[name_of[id(sub.right)]] = name
    leaf_names = [name for name, sub in numbered if isinstance(sub, Leaf)]
    results: dict[str, TripleSet] = {}
    activity = _Activity()
    lock = threading.Lock()

    def run_leaf(name: str) -> TripleSet:
        path = run_dir / f"{name}.nt"
        began = time.perf_counter()
        try:
            with activity:
                return materialize_group(
                    groups[name], dis, path, dictionary=dictionary, timeout=leaf_timeouts.get(name, timeout)
                )
        except LeafTimeoutError as exc:
            logger.warning("%s; ancestors continue with an empty input", exc)
            with lock:
                report.failed_leaves.append(name)
            _write_lines(path, [])
            return TripleSet(str(path), 0, sorted=True)
        finally:
            with lock:
                report.leaf_seconds[name] = time.perf_counter() - began

    def run_union(name: str) -> TripleSet:
        node = node_of[name]
        began = time.perf_counter()
        try:
            with activity:
                return union_triples(
                    node.op, results[name_of[id(node.left)]], results[name_of[id(node.right)]],
                    run_dir / f"{name}.nt", memory_limit=memory_limit, check_disjoint=check_disjoint,
                    node=name, decode=dictionary.decode_line if dictionary is not None else None,
                )
        finally:
            with lock:
                report.union_seconds[name] = time.perf_counter() - began

    workers = parallelism or max(1, min(len(leaf_names), os.cpu_count() or 1))
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="kg-node") as pool:
        futures: dict[Future, str] = {}
        scheduled: set[str] = set()

        def ready(name: str) -> None:
            parent = parent_of.get(name)
            if parent is None or parent in scheduled:
                return
            left, right = (name_of[id(node_of[parent].left)], name_of[id(node_of[parent].right)])
            if left in results and right in results:
                scheduled.add(parent)
                futures[pool.submit(run_union, parent)] = parent

        try:
            for name in leaf_names:
                if leaf_results and name in leaf_results:
                    results[name] = leaf_results[name]
                else:
                    futures[pool.submit(run_leaf, name)] = name
            for name in leaf_names:
                if leaf_results and name in leaf_results:
                    ready(name)
            while futures:
                done, _ = wait(futures, return_when=FIRST_COMPLETED)
                for future in done:
                    name = futures.pop(future)
                    results[name] = future.result()
                    ready(name)
        except BaseException:
            for future in futures:
                future.cancel()
            raise

    root = results[numbered[-1][0]]
    if dictionary is None and root.sorted:
        shutil.copyfile(root.path, output)
        report.final_triples = root.cardinality
    else:
        report.final_triples = sort_unique(
            root.path, output, memory_limit, transform=dictionary.decode_line if dictionary is not None else None
        )

    report.triple_counts = {name: results[name].cardinality for name, _ in numbered}
    report.peak_parallelism = activity.peak
    report.failed_leaves.sort()
    total = sum(len(groups[name].executed) for name in leaf_names)
    completed = sum(len(groups[name].executed) for name in leaf_names if name not in report.failed_leaves)
    report.completion_percent = 100.0 * completed / total if total else 100.0
    report.total_seconds = time.perf_counter() - started
    logger.info(
        "materialized %d triples into %s (%.1f%% of assertions completed)",
        report.final_triples, output, report.completion_percent,
    )
    return report
