"""Messages in transit.

Each channel is addressed by ``(key, sender, receiver)``.  Void keys carry
no payload and are modelled as counters; valued keys are single slots that
are either empty (``None``) or hold one payload.  Channels have no order:
any message in transit may be delivered next.

Endpoints are plain ints.  Whether an int names a process or a site
follows from the key: ``asklist`` and ``lower`` go from a process to a
site, ``answer`` and ``done`` from a site to a process, all other keys
connect two processes.
"""
from __future__ import annotations

from typing import Any

from .job_model import Job

NOTIFY = "notify"
WITHDRAW = "withdraw"
ACK = "ack"
GRA = "gra"
HELLO = "hello"
WELCOME = "welcome"
ASKLIST = "asklist"
ANSWER = "answer"
LOWER = "lower"
DONE = "done"

VOID_KEYS = frozenset({WITHDRAW, ACK, GRA, HELLO, DONE})
VALUED_KEYS = frozenset({NOTIFY, WELCOME, ASKLIST, ANSWER, LOWER})
ALL_KEYS = VOID_KEYS | VALUED_KEYS

TO_SITE = frozenset({ASKLIST, LOWER})
FROM_SITE = frozenset({ANSWER, DONE})
CENTRAL_KEYS = frozenset({NOTIFY, WITHDRAW, ACK, GRA})

Channel = tuple[str, int, int]


class NetworkError(RuntimeError):
    pass


class OverwriteInTransit(NetworkError):
    """A valued message was sent while its channel slot was occupied."""

    def __init__(self, key: str, src: int, dst: int, old: Any, new: Any):
        super().__init__(f"{key} {src}->{dst}: slot holds {old!r}, cannot send {new!r}")
        self.channel = (key, src, dst)
        self.trace = None


class NothingInTransit(NetworkError):
    pass


def endpoint_name(key: str, role: str, ident: int) -> str:
    """Render an endpoint as ``p3`` or ``s1``; role is 'src' or 'dst'."""
    if role == "src":
        is_site = key in FROM_SITE
    else:
        is_site = key in TO_SITE
    return f"{'s' if is_site else 'p'}{ident}"


class Network:
    """Non-empty channels only; absent channels are count 0 / slot empty."""

    __slots__ = ("void", "valued")

    def __init__(self):
        self.void: dict[Channel, int] = {}
        self.valued: dict[Channel, Any] = {}

    def send_void(self, key: str, src: int, dst: int) -> int:
        """Add one message; returns the new count (above 1 is a protocol bug)."""
        if key not in VOID_KEYS:
            raise ValueError(f"{key} is not a void key")
        ch = (key, src, dst)
        n = self.void.get(ch, 0) + 1
        self.void[ch] = n
        return n

    def send_valued(self, key: str, src: int, dst: int, value: Any) -> None:
        if key not in VALUED_KEYS:
            raise ValueError(f"{key} is not a valued key")
        if value is None:
            raise ValueError("None is reserved for the empty slot")
        ch = (key, src, dst)
        old = self.valued.get(ch)
        if old is not None:
            raise OverwriteInTransit(key, src, dst, old, value)
        self.valued[ch] = value

    def count(self, key: str, src: int, dst: int) -> int:
        return self.void.get((key, src, dst), 0)

    def slot(self, key: str, src: int, dst: int) -> Any:
        return self.valued.get((key, src, dst))

    def deliverable(self) -> list[Channel]:
        return sorted([*self.void, *self.valued])

    def consume(self, key: str, src: int, dst: int) -> Any:
        """Remove one message and return its payload (None for void keys)."""
        ch = (key, src, dst)
        if key in VOID_KEYS:
            n = self.void.get(ch, 0)
            if n <= 0:
                raise NothingInTransit(f"no {key} in transit {src}->{dst}")
            if n == 1:
                del self.void[ch]
            else:
                self.void[ch] = n - 1
            return None
        value = self.valued.pop(ch, None)
        if value is None:
            raise NothingInTransit(f"no {key} in transit {src}->{dst}")
        return value

    def is_empty(self) -> bool:
        return not self.void and not self.valued

    def copy(self) -> Network:
        net = Network.__new__(Network)
        net.void = dict(self.void)
        net.valued = dict(self.valued)
        return net

    def canonical(self) -> tuple:
        return (
            tuple(sorted(self.void.items())),
            tuple(sorted((ch, canon_payload(v)) for ch, v in self.valued.items())),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return self.void == other.void and self.valued == other.valued

    def __repr__(self) -> str:
        parts = [f"{k}.{s}.{d}={n}" for (k, s, d), n in sorted(self.void.items())]
        parts += [f"{k}.{s}.{d}={v!r}" for (k, s, d), v in sorted(self.valued.items(), key=lambda kv: kv[0])]
        return "Network(" + ", ".join(parts) + ")"


def canon_payload(value: Any) -> Any:
    """Hashable, order-independent form of a payload."""
    if isinstance(value, Job):
        return ("J", value.items)
    if isinstance(value, frozenset):
        return ("S", tuple(sorted(value)))
    return value


def encode_payload(value: Any) -> Any:
    """JSON-friendly form of a payload."""
    if value is None:
        return None
    if isinstance(value, Job):
        return {"job": value.pairs()}
    if isinstance(value, frozenset | set):
        return {"set": sorted(value)}
    return value


def decode_payload(data: Any) -> Any:
    if isinstance(data, dict):
        if "job" in data:
            return Job(data["job"])
        if "set" in data:
            return frozenset(data["set"])
        raise ValueError(f"unknown payload {data!r}")
    return data
