"""Line-delimited execution traces and their replay.

A trace file is JSON lines: one header object, one object per step, and a
footer.  Records are written with sorted keys and no whitespace so that
equal runs give byte-identical files.

Each step record holds the step label, the payload consumed from the
network, the messages sent, the control point ``[pc, pcr]`` of the acting
process after the step, and every ``hash_every`` steps the state hash.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, NamedTuple, TextIO

from .job_model import NONE
from .network import decode_payload, encode_payload
from .protocol import (
    ABORT,
    ENV21,
    ENV31,
    FORWARD,
    SITE,
    STANDARD,
    GlobalState,
    Step,
    StepNotEnabled,
    Variant,
    enabled,
    execute,
)

TRACE_FORMAT = "resalloc-trace"
TRACE_VERSION = 1

COMPLETED = "completed"
STEP_LIMIT = "step-limit"
VIOLATION = "violation"
QUIESCENT = "quiescent"


class TraceFormatError(ValueError):
    pass


class TraceRecord(NamedTuple):
    i: int
    step: Step
    ctl: tuple[int, int] | None
    recv: Any = None
    sends: tuple = ()
    hash: str | None = None


@dataclass
class Trace:
    header: dict
    records: list[TraceRecord] = field(default_factory=list)
    status: str = COMPLETED
    violation: dict | None = None

    def __len__(self) -> int:
        return len(self.records)

    def steps(self) -> list[Step]:
        return [r.step for r in self.records]

    def footer(self) -> dict:
        out = {"end": self.status, "steps": len(self.records)}
        if self.violation is not None:
            out["violation"] = self.violation
        return out

    def dumps(self) -> str:
        lines = [_dump(self.header)]
        lines.extend(_dump(record_to_json(r)) for r in self.records)
        lines.append(_dump(self.footer()))
        return "\n".join(lines) + "\n"

    def write(self, fh: TextIO) -> None:
        fh.write(self.dumps())

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            self.write(fh)


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def make_header(scenario: dict, seed: int, variant: Variant, init_hash: str) -> dict:
    return {
        "format": TRACE_FORMAT,
        "version": TRACE_VERSION,
        "scenario": scenario,
        "seed": seed,
        "variant": variant.to_dict(),
        "init": init_hash,
    }


def step_to_json(step: Step) -> list:
    return [step.kind, step.actor, step.line, step.peer, step.key, encode_payload(step.value)]


def step_from_json(data: list) -> Step:
    try:
        kind, actor, line, peer, key, value = data
    except (TypeError, ValueError):
        raise TraceFormatError(f"malformed step {data!r}") from None
    value = decode_payload(value)
    if kind == ENV31 and value is not None:
        value = tuple(value)
    return Step(kind, actor, line, peer, key, value)


def record_to_json(r: TraceRecord) -> dict:
    out: dict[str, Any] = {
        "i": r.i,
        "step": step_to_json(r.step),
        "ctl": list(r.ctl) if r.ctl is not None else None,
    }
    if r.recv is not None:
        out["recv"] = encode_payload(r.recv)
    if r.sends:
        out["sends"] = [[k, a, b, encode_payload(v)] for k, a, b, v in r.sends]
    if r.hash is not None:
        out["hash"] = r.hash
    return out


def record_from_json(d: dict) -> TraceRecord:
    try:
        ctl = d["ctl"]
        return TraceRecord(
            d["i"],
            step_from_json(d["step"]),
            tuple(ctl) if ctl is not None else None,
            decode_payload(d.get("recv")),
            tuple((k, a, b, decode_payload(v)) for k, a, b, v in d.get("sends", ())),
            d.get("hash"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceFormatError(f"malformed record {d!r}: {exc}") from None


def loads(text: str) -> Trace:
    return read_lines(text.splitlines())


def load(path: str) -> Trace:
    with open(path, encoding="utf-8") as fh:
        return read_lines(fh)


def read_lines(lines: Iterable[str]) -> Trace:
    objs = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            objs.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"line {n}: {exc.msg}") from None
    if not objs:
        raise TraceFormatError("empty trace")
    header = objs[0]
    if header.get("format") != TRACE_FORMAT:
        raise TraceFormatError("line 1: not a trace header")
    version = header.get("version")
    if not isinstance(version, int) or version > TRACE_VERSION:
        raise TraceFormatError(f"line 1: unsupported trace version {version!r}")
    trace = Trace(header)
    body = objs[1:]
    if body and "end" in body[-1]:
        footer = body.pop()
        trace.status = footer["end"]
        trace.violation = footer.get("violation")
    trace.records = [record_from_json(d) for d in body]
    return trace


@dataclass
class ReplayResult:
    ok: bool
    steps: int
    error: str | None = None
    index: int | None = None
    final: GlobalState | None = None


def replay(trace: Trace, initial: GlobalState, variant: Variant = STANDARD,
           check=None) -> ReplayResult:
    """Re-execute the recorded steps and compare hashes and control points.

    ``check`` is an optional callable ``(state, index) -> str | None`` run
    after every step; a non-None result stops the replay as a failure.
    """
    state = initial.clone()
    if trace.header.get("init") not in (None, state.state_hash()):
        return ReplayResult(False, 0, "initial state hash differs", -1, state)
    for n, rec in enumerate(trace.records):
        step = rec.step
        if not enabled(state, step, variant):
            return ReplayResult(False, n, f"step {step} not enabled", rec.i, state)
        try:
            execute(state, step)
        except StepNotEnabled as exc:
            return ReplayResult(False, n, f"step {exc} not executable", rec.i, state)
        if step.kind != SITE:
            ps = state.procs[step.actor]
            if rec.ctl is not None and tuple(rec.ctl) != (ps.pc, ps.pcr):
                return ReplayResult(False, n, f"control point of {step} differs", rec.i, state)
        if rec.hash is not None and rec.hash != state.state_hash():
            return ReplayResult(False, n, f"state hash differs after {step}", rec.i, state)
        if check is not None:
            msg = check(state, rec.i)
            if msg:
                return ReplayResult(False, n, msg, rec.i, state)
    return ReplayResult(True, len(trace.records), None, None, state)


def job_events(trace: Trace) -> Iterable[tuple[int, int, Any]]:
    """Yield ``(index, process, job)`` whenever a process's job changes.

    Jobs are assigned by Env21 and reset to none exactly when the process
    returns to line 21, which the control point reveals.
    """
    for rec in trace.records:
        step = rec.step
        if step.kind == ENV21:
            yield rec.i, step.actor, step.value
        elif step.kind in (FORWARD, ABORT) and rec.ctl is not None and rec.ctl[0] == 21:
            yield rec.i, step.actor, NONE
