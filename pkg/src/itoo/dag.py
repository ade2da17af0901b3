"""Parallel DAG task execution with a fixed worker pool.

Tasks are callables taking a dict of their dependencies' results. A task
runs exactly once after all its dependencies succeeded; a failure marks
every descendant skipped. Cycles are rejected before anything runs, naming
one offending path.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import ContractViolation, CycleError

TaskFn = Callable[[dict], object]


@dataclass(frozen=True)
class TaskDag:
    nodes: dict[str, TaskFn]
    edges: tuple[tuple[str, str], ...]  # (dependency, dependent)

    def __post_init__(self):
        for a, b in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise ContractViolation(f"edge ({a!r}, {b!r}) references unknown task")

    def dependencies(self) -> dict[str, set[str]]:
        deps: dict[str, set[str]] = {name: set() for name in self.nodes}
        for a, b in self.edges:
            deps[b].add(a)
        return deps

    def dependents(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {name: set() for name in self.nodes}
        for a, b in self.edges:
            out[a].add(b)
        return out


def find_cycle(dag: TaskDag) -> list[str] | None:
    """Return one cycle as a path like [A, B, A], or None."""
    deps_out = dag.dependents()
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {name: WHITE for name in dag.nodes}
    parent: dict[str, str | None] = {}

    for root in sorted(dag.nodes):
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, list]] = [(root, sorted(deps_out[root]))]
        parent[root] = None
        color[root] = GRAY
        while stack:
            node, pending = stack[-1]
            if pending:
                child = pending.pop(0)
                if color[child] == GRAY:
                    # walk back from node to child to build the cycle path
                    path = [child, node]
                    cur = node
                    while parent[cur] is not None and cur != child:
                        cur = parent[cur]
                        path.append(cur)
                        if cur == child:
                            break
                    path.reverse()
                    if path[0] != child:
                        path.insert(0, child)
                    return path
                if color[child] == WHITE:
                    color[child] = GRAY
                    parent[child] = node
                    stack.append((child, sorted(deps_out[child])))
            else:
                color[node] = BLACK
                stack.pop()
    return None


@dataclass(frozen=True)
class TraceEntry:
    task: str
    start: float
    end: float
    worker: str

    def overlaps(self, other: "TraceEntry") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass
class TaskOutcome:
    state: str  # "ok" | "failed" | "skipped"
    result: object = None
    error: BaseException | None = None


@dataclass
class DagResult:
    outcomes: dict[str, TaskOutcome]
    completion_order: list[str] = field(default_factory=list)
    trace: list[TraceEntry] = field(default_factory=list)

    def result_of(self, task: str):
        return self.outcomes[task].result


def execute_dag(dag: TaskDag, workers: int = 4) -> DagResult:
    """Run every task after its dependencies on a fixed-size worker pool.

    The completion order is a topological order of the executed subgraph;
    independent tasks may overlap in the trace.
    """
    cycle = find_cycle(dag)
    if cycle is not None:
        raise CycleError(cycle)

    deps = dag.dependencies()
    dependents = dag.dependents()
    remaining = {name: len(d) for name, d in deps.items()}
    outcomes: dict[str, TaskOutcome] = {}
    completion: list[str] = []
    trace: list[TraceEntry] = []
    lock = threading.Lock()
    done = threading.Event()
    pending = len(dag.nodes)
    if pending == 0:
        return DagResult({}, [], [])

    pool = ThreadPoolExecutor(max_workers=max(1, workers), thread_name_prefix="dag")

    def finish(name: str, outcome: TaskOutcome) -> None:
        nonlocal pending
        to_submit: list[str] = []
        to_skip: list[str] = []
        with lock:
            outcomes[name] = outcome
            if outcome.state == "ok":
                completion.append(name)
            pending -= 1
            if pending == 0:
                done.set()
            for child in sorted(dependents[name]):
                remaining[child] -= 1
                if remaining[child] == 0:
                    if all(outcomes[d].state == "ok" for d in deps[child]):
                        to_submit.append(child)
                    else:
                        to_skip.append(child)
        for child in to_submit:
            pool.submit(run, child)
        for child in to_skip:
            finish(child, TaskOutcome("skipped"))

    def run(name: str) -> None:
        with lock:
            inputs = {d: outcomes[d].result for d in deps[name]}
        start = time.perf_counter()
        try:
            result = dag.nodes[name](inputs)
            outcome = TaskOutcome("ok", result=result)
        except BaseException as exc:
            outcome = TaskOutcome("failed", error=exc)
        end = time.perf_counter()
        with lock:
            trace.append(TraceEntry(name, start, end, threading.current_thread().name))
        finish(name, outcome)

    roots = sorted(name for name, count in remaining.items() if count == 0)
    for name in roots:
        pool.submit(run, name)
    done.wait()
    pool.shutdown(wait=True)
    return DagResult(outcomes, completion, trace)


def load_dag_file(path: str | Path) -> tuple[list[str], list[tuple[str, str]]]:
    """Parse a DAG definition file: one ``task: dep1 dep2 ...`` line per task.
    Returns (task names in file order, edges as (dep, task))."""
    names: list[str] = []
    edges: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            name, _, deps = line.partition(":")
            name = name.strip()
            names.append(name)
            for dep in deps.split():
                edges.append((dep, name))
    return names, edges


def is_topological(order: list[str], dag: TaskDag) -> bool:
    position = {name: i for i, name in enumerate(order)}
    return all(
        position[a] < position[b]
        for a, b in dag.edges
        if a in position and b in position
    )
